//! The alternating update schedule, checkpointing and resume.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use catwgan_core::losses::{interpolate, tape, GpMode};
use catwgan_core::nets::{build_d1, build_d2, build_generator, sample_latent};
use catwgan_core::{Adam, Checkpoint, Graph, Mode, Network32, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{config_diff, TrainConfig, TrainMode};
use crate::error::{Result, TrainError};
use crate::stats::{StatRecord, StepStats, TrainStats};

pub const STATS_FILE: &str = "stats.csv";
pub const CONFIG_FILE: &str = "config.txt";

/// Images in model range, NCHW.
#[derive(Clone, Debug)]
pub struct Pools {
    pub unlabeled: Tensor<f32>,
    pub labeled: Option<LabeledPool>,
}

#[derive(Clone, Debug)]
pub struct LabeledPool {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
}

/// Uniform draw of `n` rows with replacement.
pub fn sample_rows<R: Rng + ?Sized>(t: &Tensor<f32>, n: usize, rng: &mut R) -> Result<(Tensor<f32>, Vec<usize>)> {
    let rows = t.shape().first().copied().unwrap_or(0);
    if rows == 0 {
        return Err(TrainError::EmptyPool);
    }
    let per = t.len() / rows;
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..rows)).collect();
    let mut data = Vec::with_capacity(n * per);
    for &i in &idx {
        data.extend_from_slice(&t.data()[i * per..(i + 1) * per]);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = n;
    Ok((Tensor::new(&shape, data)?, idx))
}

pub(crate) fn rng_state(rng: &ChaCha8Rng) -> BTreeMap<String, String> {
    let hex: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
    BTreeMap::from([
        ("seed".to_string(), hex),
        ("stream".to_string(), rng.get_stream().to_string()),
        ("word_pos".to_string(), rng.get_word_pos().to_string()),
    ])
}

pub(crate) fn restore_rng(state: &BTreeMap<String, String>) -> Result<ChaCha8Rng> {
    let bad = || catwgan_core::Error::Checkpoint("malformed rng state".into());
    let hex = state.get("seed").ok_or_else(bad)?;
    if hex.len() != 64 {
        return Err(bad().into());
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(state.get("stream").and_then(|s| s.parse().ok()).ok_or_else(bad)?);
    rng.set_word_pos(state.get("word_pos").and_then(|s| s.parse().ok()).ok_or_else(bad)?);
    Ok(rng)
}

/// Everything one step needs besides the data.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub g: Network32,
    pub d1: Network32,
    pub d2: Network32,
    pub opt_g: Adam<f32>,
    pub opt_d1: Adam<f32>,
    pub opt_d2: Adam<f32>,
    rng: ChaCha8Rng,
    g_iter: u64,
    stats: TrainStats,
    window: Vec<StepStats>,
}

/// Step statistics plus the D1 posteriors they were computed from.
#[derive(Clone, Debug)]
pub struct StepDetail {
    pub stats: StepStats,
    pub real_posteriors: Tensor<f32>,
    pub fake_posteriors: Tensor<f32>,
}

fn grads_of(g: &mut Graph<f32>, loss: Var, wrt: &[Var]) -> Result<Vec<Tensor<f32>>> {
    let gs = g.backward(loss, wrt)?;
    Ok(gs.iter().map(|&v| g.value(v).clone()).collect())
}

impl Trainer {
    /// Fresh networks and optimizers; all randomness flows from `config.seed`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let g = build_generator::<f32, _>(&config.arch, &mut rng)?;
        let d1 = build_d1::<f32, _>(&config.arch, &mut rng)?;
        let d2 = build_d2::<f32, _>(&config.arch, &mut rng)?;
        let adam = config.adam();
        Ok(Self {
            opt_g: Adam::new(adam, &g),
            opt_d1: Adam::new(adam, &d1),
            opt_d2: Adam::new(adam, &d2),
            g,
            d1,
            d2,
            rng,
            g_iter: 0,
            stats: TrainStats::default(),
            window: Vec::new(),
            config,
        })
    }

    pub fn g_iter(&self) -> u64 {
        self.g_iter
    }

    pub fn stats(&self) -> &TrainStats {
        &self.stats
    }

    fn check_pools(&self, pools: &Pools) -> Result<()> {
        if pools.unlabeled.shape().first().copied().unwrap_or(0) == 0 {
            return Err(TrainError::EmptyPool);
        }
        if self.config.mode == TrainMode::Semi {
            let l = pools.labeled.as_ref().ok_or(TrainError::MissingLabeled)?;
            if l.labels.is_empty() {
                return Err(TrainError::EmptyPool);
            }
        }
        Ok(())
    }

    /// Generator samples as a plain tensor; running statistics untouched.
    fn fakes(&mut self) -> Result<Tensor<f32>> {
        let z = sample_latent(self.config.batch_size, self.config.arch.latent_dim, self.config.latent_prior, &mut self.rng);
        self.g.set_mode(Mode::Train);
        self.g.set_track_stats(false);
        let out = self.g.run(&z);
        self.g.set_track_stats(true);
        Ok(out?)
    }

    fn real(&mut self, pools: &Pools) -> Result<Tensor<f32>> {
        Ok(sample_rows(&pools.unlabeled, self.config.batch_size, &mut self.rng)?.0)
    }

    fn labeled(&mut self, pools: &Pools) -> Result<Option<(Tensor<f32>, Vec<usize>)>> {
        if self.config.mode != TrainMode::Semi {
            return Ok(None);
        }
        let pool = pools.labeled.as_ref().ok_or(TrainError::MissingLabeled)?;
        let (x, idx) = sample_rows(&pool.images, self.config.batch_size, &mut self.rng)?;
        Ok(Some((x, idx.iter().map(|&i| pool.labels[i]).collect())))
    }

    /// One critic pass on fresh real and fake batches, updating D2 when
    /// `update` is set; returns the Wasserstein distance before the step.
    pub fn critic_step(&mut self, pools: &Pools, update: bool) -> Result<f64> {
        let real = self.real(pools)?;
        let fake = self.fakes()?;
        let w = self.config.weights();
        let mode = self.config.gp_mode;
        let mut g = Graph::new();
        let bound = self.d2.bind(&mut g);
        let xr = g.leaf(real.clone());
        let d_real = self.d2.forward(&mut g, &bound, xr)?;
        let (gp, d_fake) = match mode {
            GpMode::AsWritten => {
                let xf = g.leaf(fake);
                let d2 = &mut self.d2;
                let mut critic = |g: &mut Graph<f32>, x: Var| d2.forward(g, &bound, x);
                tape::gradient_penalty(&mut g, &mut critic, xf, mode)?
            }
            GpMode::InterpolatedOneCentered => {
                let xf = g.leaf(fake.clone());
                let d_fake = self.d2.forward(&mut g, &bound, xf)?;
                let mixed = g.leaf(interpolate(&real, &fake, &mut self.rng)?);
                let d2 = &mut self.d2;
                let mut critic = |g: &mut Graph<f32>, x: Var| d2.forward(g, &bound, x);
                (tape::gradient_penalty(&mut g, &mut critic, mixed, mode)?.0, d_fake)
            }
        };
        // D2 is driven high on fakes, so the distance is the negated estimate.
        let est = tape::wasserstein_estimate(&mut g, d_real, d_fake)?;
        let wd_value = -(g.scalar_value(est) as f64);
        if update {
            let loss = tape::wgan_critic_loss(&mut g, d_real, d_fake, gp, &w)?;
            let grads = grads_of(&mut g, loss, &bound.trainable())?;
            self.opt_d2.step(&mut self.d2, &grads)?;
        }
        Ok(wd_value)
    }

    /// One D1 pass on fresh real, fake and labeled batches; updates D1 and
    /// its running statistics only when `update` is set.
    pub fn d1_step(&mut self, pools: &Pools, update: bool) -> Result<(StepStats, Tensor<f32>, Tensor<f32>)> {
        let real = self.real(pools)?;
        let fake = self.fakes()?;
        let labeled = self.labeled(pools)?;
        let w = self.config.weights();
        self.d1.set_mode(Mode::Train);
        self.d1.set_track_stats(update);
        let mut g = Graph::new();
        let bound = self.d1.bind(&mut g);
        let xr = g.leaf(real);
        let pr = self.d1.forward(&mut g, &bound, xr)?;
        let xf = g.leaf(fake);
        let pf = self.d1.forward(&mut g, &bound, xf)?;
        let lab = match &labeled {
            Some((x, y)) => {
                let xl = g.leaf(x.clone());
                Some((self.d1.forward(&mut g, &bound, xl)?, y.as_slice()))
            }
            None => None,
        };
        self.d1.set_track_stats(true);
        let s_r = tape::conditional_entropy(&mut g, pr)?;
        let s_g = tape::conditional_entropy(&mut g, pf)?;
        let ce = match lab {
            Some((p, y)) => {
                let c = tape::cross_entropy(&mut g, p, y)?;
                Some(g.scalar_value(c) as f64)
            }
            None => None,
        };
        let stats = StepStats { wd: 0.0, s_r: g.scalar_value(s_r) as f64, s_g: g.scalar_value(s_g) as f64, ce };
        let (real_p, fake_p) = (g.value(pr).clone(), g.value(pf).clone());
        if update {
            let loss = tape::catgan_d1_loss(&mut g, pr, pf, lab, &w)?;
            let grads = grads_of(&mut g, loss, &bound.trainable())?;
            self.opt_d1.step(&mut self.d1, &grads)?;
        }
        Ok((stats, real_p, fake_p))
    }

    /// One generator update through both discriminators, which stay unchanged.
    pub fn g_step(&mut self) -> Result<()> {
        let z = sample_latent(self.config.batch_size, self.config.arch.latent_dim, self.config.latent_prior, &mut self.rng);
        let w = self.config.weights();
        let mut g = Graph::new();
        let gb = self.g.bind(&mut g);
        let d1b = self.d1.bind(&mut g);
        let d2b = self.d2.bind(&mut g);
        self.g.set_mode(Mode::Train);
        let zl = g.leaf(z);
        let fake = self.g.forward(&mut g, &gb, zl)?;
        self.d1.set_track_stats(false);
        let probs = self.d1.forward(&mut g, &d1b, fake);
        self.d1.set_track_stats(true);
        let probs = probs?;
        let scores = self.d2.forward(&mut g, &d2b, fake)?;
        let loss = tape::combined_g_loss(&mut g, probs, scores, &w)?;
        let grads = grads_of(&mut g, loss, &gb.trainable())?;
        self.opt_g.step(&mut self.g, &grads)?;
        Ok(())
    }

    /// One generator iteration: `critic_steps` D2 updates, one D1 update
    /// and one G update, each on freshly drawn batches.
    pub fn step(&mut self, pools: &Pools) -> Result<StepDetail> {
        self.check_pools(pools)?;
        let mut wd = 0.0;
        for _ in 0..self.config.critic_steps {
            wd = self.critic_step(pools, true)?;
        }
        let (mut stats, real_posteriors, fake_posteriors) = self.d1_step(pools, true)?;
        stats.wd = wd;
        self.g_step()?;
        self.g_iter += 1;
        self.window.push(stats);
        Ok(StepDetail { stats, real_posteriors, fake_posteriors })
    }

    /// The same statistics as [`Trainer::step`] without changing any network.
    pub fn evaluate(&mut self, pools: &Pools) -> Result<StepStats> {
        self.check_pools(pools)?;
        let wd = self.critic_step(pools, false)?;
        let (mut stats, _, _) = self.d1_step(pools, false)?;
        stats.wd = wd;
        Ok(stats)
    }

    /// Closes the current logging window into a stats record.
    fn record(&mut self, pools: &Pools) -> Result<StatRecord> {
        let r = if self.window.is_empty() {
            let s = self.evaluate(pools)?;
            StatRecord::mean_of(self.g_iter, &[s])
        } else {
            StatRecord::mean_of(self.g_iter, &self.window)
        };
        self.window.clear();
        self.stats.push(r)?;
        Ok(r)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            iteration: self.g_iter,
            config_hash: self.config.hash(),
            rng_state: rng_state(&self.rng),
            ..Default::default()
        };
        for (key, net, opt) in [("g", &self.g, &self.opt_g), ("d1", &self.d1, &self.opt_d1), ("d2", &self.d2, &self.opt_d2)] {
            ck.insert_network(key, net);
            ck.insert_tensors(&format!("adam_{key}"), opt.state(net));
            ck.counters.insert(format!("adam_{key}_steps"), opt.steps());
        }
        ck.attachments.insert(STATS_FILE.into(), self.stats.to_csv());
        ck.attachments.insert(CONFIG_FILE.into(), self.config.trajectory_text());
        ck
    }

    pub fn checkpoint_dir(out: &Path, g_iter: u64) -> PathBuf {
        out.join("checkpoints").join(format!("iter_{g_iter:06}"))
    }

    /// Restores a run; `config` must match the stored one up to run length
    /// and checkpoint cadence.
    pub fn resume(dir: &Path, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let ck = Checkpoint::load(dir)?;
        if ck.config_hash != config.hash() {
            let stored = std::fs::read_to_string(dir.join(CONFIG_FILE)).unwrap_or_default();
            return Err(TrainError::ConfigMismatch(config_diff(&stored, &config.trajectory_text())));
        }
        let adam = config.adam();
        let mut nets = Vec::new();
        for key in ["g", "d1", "d2"] {
            let mut net: Network32 = ck.network(key)?;
            net.set_mode(Mode::Train);
            let steps = ck.counters.get(&format!("adam_{key}_steps")).copied().unwrap_or(0);
            let opt = Adam::restore(adam, steps, &net, |name| Ok(ck.tensor(&format!("adam_{key}.{name}"))?.clone()))?;
            nets.push((net, opt));
        }
        let stats_path = dir.join(STATS_FILE);
        let text = std::fs::read_to_string(&stats_path).map_err(|source| TrainError::Io { path: stats_path, source })?;
        let mut it = nets.into_iter();
        let (g, opt_g) = it.next().unwrap();
        let (d1, opt_d1) = it.next().unwrap();
        let (d2, opt_d2) = it.next().unwrap();
        Ok(Self {
            config,
            g,
            d1,
            d2,
            opt_g,
            opt_d1,
            opt_d2,
            rng: restore_rng(&ck.rng_state)?,
            g_iter: ck.iteration,
            stats: TrainStats::parse(&text)?,
            window: Vec::new(),
        })
    }

    /// Runs until `max_g_iters`, recording (and, with `out`, writing) a
    /// checkpoint at the start and every `checkpoint_every` iterations.
    pub fn run(&mut self, pools: &Pools, out: Option<&Path>, mut observer: impl FnMut(&StatRecord)) -> Result<()> {
        self.check_pools(pools)?;
        let every = self.config.checkpoint_every;
        if self.g_iter == 0 && self.stats.records.is_empty() {
            let r = self.record(pools)?;
            self.save(out)?;
            observer(&r);
        }
        while self.g_iter < self.config.max_g_iters {
            self.step(pools)?;
            if self.g_iter % every == 0 || self.g_iter == self.config.max_g_iters {
                let r = self.record(pools)?;
                self.save(out)?;
                observer(&r);
            }
        }
        if let Some(out) = out {
            let p = out.join(STATS_FILE);
            std::fs::write(&p, self.stats.to_csv()).map_err(|source| TrainError::Io { path: p, source })?;
        }
        Ok(())
    }

    fn save(&self, out: Option<&Path>) -> Result<()> {
        if let Some(out) = out {
            self.checkpoint().save(&Self::checkpoint_dir(out, self.g_iter))?;
        }
        Ok(())
    }
}
