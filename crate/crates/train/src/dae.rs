//! Denoising-autoencoder baseline training.

use std::path::Path;

use catwgan_core::nets::build_dae;
use catwgan_core::{Adam, Checkpoint, Graph, Mode, Network32, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::TrainConfig;
use crate::error::{Result, TrainError};
use crate::trainer::{rng_state, sample_rows, Trainer, CONFIG_FILE};

pub const DAE_STATS_FILE: &str = "dae_stats.csv";

/// Adds zero-mean Gaussian noise; `sigma == 0` returns the input unchanged.
pub fn corrupt<R: rand::Rng + ?Sized>(x: &Tensor<f32>, sigma: f64, rng: &mut R) -> Result<Tensor<f32>> {
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let n = Normal::new(0.0, sigma).map_err(|e| TrainError::Config(format!("noise sigma: {e}")))?;
    Ok(Tensor::from_fn(x.shape(), |i| x.data()[i] + n.sample(rng) as f32))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DaeRecord {
    pub g_iter: u64,
    pub mse: f64,
}

#[derive(Clone, Debug)]
pub struct DaeTrainer {
    pub config: TrainConfig,
    pub encoder: Network32,
    pub decoder: Network32,
    opt_enc: Adam<f32>,
    opt_dec: Adam<f32>,
    rng: ChaCha8Rng,
    iter: u64,
    pub history: Vec<DaeRecord>,
}

impl DaeTrainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (encoder, decoder) = build_dae::<f32, _>(&config.arch, &mut rng)?;
        let adam = config.adam();
        Ok(Self {
            opt_enc: Adam::new(adam, &encoder),
            opt_dec: Adam::new(adam, &decoder),
            encoder,
            decoder,
            rng,
            iter: 0,
            history: Vec::new(),
            config,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iter
    }

    /// Reconstruction of `x` in inference mode.
    pub fn reconstruct(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let (me, md) = (self.encoder.mode(), self.decoder.mode());
        self.encoder.set_mode(Mode::Inference);
        self.decoder.set_mode(Mode::Inference);
        let out = self.encoder.run(x).and_then(|h| self.decoder.run(&h));
        self.encoder.set_mode(me);
        self.decoder.set_mode(md);
        Ok(out?)
    }

    /// One update on a fresh batch; returns the batch MSE before the step.
    pub fn step(&mut self, pool: &Tensor<f32>) -> Result<f64> {
        let (x, _) = sample_rows(pool, self.config.batch_size, &mut self.rng)?;
        self.step_on(x)
    }

    /// One update on exactly `x`.
    pub fn step_on(&mut self, x: Tensor<f32>) -> Result<f64> {
        let noisy = corrupt(&x, self.config.dae_noise_sigma, &mut self.rng)?;
        self.encoder.set_mode(Mode::Train);
        self.decoder.set_mode(Mode::Train);
        let mut g = Graph::new();
        let eb = self.encoder.bind(&mut g);
        let db = self.decoder.bind(&mut g);
        let xin = g.leaf(noisy);
        let h = self.encoder.forward(&mut g, &eb, xin)?;
        let y = self.decoder.forward(&mut g, &db, h)?;
        let target = g.leaf(x);
        let diff = g.sub(y, target)?;
        let sq = g.square(diff);
        let loss = g.mean_all(sq);
        let mse = g.scalar_value(loss) as f64;
        let mut wrt = eb.trainable();
        let n_enc = wrt.len();
        wrt.extend(db.trainable());
        let grads: Vec<Tensor<f32>> = g.backward(loss, &wrt)?.iter().map(|&v| g.value(v).clone()).collect();
        self.opt_enc.step(&mut self.encoder, &grads[..n_enc])?;
        self.opt_dec.step(&mut self.decoder, &grads[n_enc..])?;
        self.iter += 1;
        Ok(mse)
    }

    /// Trains to `max_g_iters`, logging every iteration's MSE and writing a
    /// checkpoint every `checkpoint_every` iterations when `out` is given.
    pub fn run(&mut self, pool: &Tensor<f32>, out: Option<&Path>, mut observer: impl FnMut(&DaeRecord)) -> Result<()> {
        while self.iter < self.config.max_g_iters {
            let mse = self.step(pool)?;
            let r = DaeRecord { g_iter: self.iter, mse };
            self.history.push(r);
            observer(&r);
            if let Some(out) = out {
                if self.iter % self.config.checkpoint_every == 0 || self.iter == self.config.max_g_iters {
                    self.checkpoint().save(&Trainer::checkpoint_dir(out, self.iter))?;
                }
            }
        }
        if let Some(out) = out {
            let p = out.join(DAE_STATS_FILE);
            std::fs::write(&p, self.stats_csv()).map_err(|source| TrainError::Io { path: p, source })?;
        }
        Ok(())
    }

    pub fn stats_csv(&self) -> String {
        let mut s = String::from("g_iter,mse\n");
        for r in &self.history {
            s.push_str(&format!("{},{}\n", r.g_iter, r.mse));
        }
        s
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            iteration: self.iter,
            config_hash: self.config.hash(),
            rng_state: rng_state(&self.rng),
            ..Default::default()
        };
        for (key, net, opt) in [("enc", &self.encoder, &self.opt_enc), ("dec", &self.decoder, &self.opt_dec)] {
            ck.insert_network(key, net);
            ck.insert_tensors(&format!("adam_{key}"), opt.state(net));
            ck.counters.insert(format!("adam_{key}_steps"), opt.steps());
        }
        ck.attachments.insert(DAE_STATS_FILE.into(), self.stats_csv());
        ck.attachments.insert(CONFIG_FILE.into(), self.config.trajectory_text());
        ck
    }
}

/// Loads the encoder of a DAE checkpoint in inference mode.
pub fn load_encoder(dir: &Path) -> Result<Network32> {
    Ok(Checkpoint::load(dir)?.network("enc")?)
}
