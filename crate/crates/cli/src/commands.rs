//! One function per subcommand. Each reads its inputs from disk and writes
//! every output under the given directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use catwgan_baselines::{color_histogram, dae_features, edge_histogram};
use catwgan_core::nets::sample_latent;
use catwgan_core::{Checkpoint, Mode, Network32, Tensor};
use catwgan_data::{
    from_batch, synth_dataset, to_batch, write_pool, DatasetManifest, Image, Label, ManifestEntry, Mask, MaskedSample,
};
use catwgan_eval::{
    ensemble_scores, extract_in_chunks, list_checkpoints, probe_scores, validate_checkpoints, Features, MetricReport,
    ScoredSet,
};
use catwgan_train::{DaeTrainer, LabeledPool, Pools, TrainMode, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::pipeline::{self, labels_as_indices, labels_of, tensor_of};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const LABELS_FILE: &str = "labels.csv";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn parse_label(s: &str) -> anyhow::Result<Label> {
    match s.trim().to_ascii_lowercase().as_str() {
        "0" | "0.0" | "benign" => Ok(Label::Benign),
        "1" | "1.0" | "melanoma" => Ok(Label::Melanoma),
        other => bail!("unknown label {other:?} (expected 0/1 or benign/melanoma)"),
    }
}

/// Finds the mask for `stem`, accepting the ISIC `_segmentation` suffix.
fn find_mask(masks: &Path, stem: &str) -> Option<PathBuf> {
    let names = [stem.to_string(), format!("{stem}_segmentation"), format!("{stem}_Segmentation")];
    let entries = fs::read_dir(masks).ok()?;
    let mut found = None;
    for e in entries.flatten() {
        let p = e.path();
        let s = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if names.iter().any(|n| *n == s) && (found.is_none() || s == stem) {
            found = Some(p);
        }
    }
    found
}

/// Reads raw images, masks and a two-column label CSV (`image,label`).
pub fn load_raw(images: &Path, masks: &Path, labels: &Path) -> anyhow::Result<Vec<MaskedSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(labels)
        .with_context(|| format!("reading labels {}", labels.display()))?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("labels line {}", line + 2))?;
        let (Some(name), Some(label)) = (rec.get(0), rec.get(1)) else {
            bail!("labels line {}: expected `image,label`", line + 2);
        };
        let label = parse_label(label).with_context(|| format!("labels line {}", line + 2))?;
        let path = images.join(name);
        let path = if path.exists() {
            path
        } else {
            ["png", "jpg", "jpeg"]
                .iter()
                .map(|ext| images.join(format!("{name}.{ext}")))
                .find(|p| p.exists())
                .ok_or_else(|| anyhow!("image {name} not found in {}", images.display()))?
        };
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name).to_string();
        let mask_path = find_mask(masks, &stem).ok_or_else(|| anyhow!("missing mask for image {stem}"))?;
        let image = Image::load(&path)?;
        let mask = Mask::load(&mask_path)?;
        out.push(MaskedSample::new(image, mask, Some(label)).with_context(|| format!("image {stem}"))?);
    }
    if out.is_empty() {
        bail!("labels file {} lists no images", labels.display());
    }
    Ok(out)
}

/// A prepared dataset directory: `manifest.txt` plus its images and masks.
pub fn load_set(dir: &Path) -> anyhow::Result<Vec<MaskedSample>> {
    let manifest = DatasetManifest::load(&dir.join(MANIFEST_FILE))
        .with_context(|| format!("dataset {}", dir.display()))?;
    Ok(manifest.load_samples(dir)?)
}

fn labeled_tensor(dir: &Path) -> anyhow::Result<(Tensor<f32>, Vec<bool>)> {
    let samples = load_set(dir)?;
    Ok((tensor_of(&samples)?, labels_of(&samples).with_context(|| format!("dataset {}", dir.display()))?))
}

/// Writes `n_per_class` synthetic samples in the raw layout `prepare` reads.
pub fn cmd_synth(out: &Path, n_per_class: usize, side: usize, seed: u64) -> anyhow::Result<()> {
    let samples = synth_dataset(n_per_class, side, seed);
    for sub in ["images", "masks"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    }
    let mut labels = String::from("image,label\n");
    for (i, s) in samples.iter().enumerate() {
        let name = format!("synth_{i:06}");
        s.image.save_png(&out.join("images").join(format!("{name}.png")))?;
        s.mask.save_png(&out.join("masks").join(format!("{name}.png")))?;
        labels.push_str(&format!("{name},{}\n", s.label.map_or(0, Label::index)));
    }
    write(&out.join(LABELS_FILE), labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PrepareMode {
    /// Balanced augmented pool.
    Unsup,
    /// Pool plus an augmented pool from a labeled subset.
    Semi,
    /// Lesion crops at network size, no augmentation.
    Eval,
}

fn identity_manifest(samples: &[MaskedSample]) -> DatasetManifest {
    let entries = samples
        .iter()
        .enumerate()
        .map(|(i, s)| ManifestEntry {
            image: format!("images/{i:06}.png"),
            mask: format!("masks/{i:06}.png"),
            label: s.label,
            source: i,
            seed: 0,
        })
        .collect();
    DatasetManifest { seed: 0, entries }
}

pub fn cmd_prepare(raw: &[MaskedSample], mode: PrepareMode, out: &Path, cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let p = &cfg.prepare;
    let res = p.resolution;
    if mode == PrepareMode::Eval {
        let set = pipeline::evaluation_set(raw, res.out_side)?;
        return Ok(write_pool(out, &identity_manifest(&set), &set)?);
    }
    let prepared = pipeline::prepare_all(raw, res)?;
    let (manifest, pool) = pipeline::augmented_pool(&prepared, p.per_class, &cfg.augment.unsupervised, res, p.seed)?;
    write_pool(out, &manifest, &pool)?;
    if mode == PrepareMode::Semi {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5e31);
        let subset = catwgan_data::select_labeled_subset(&prepared, p.labeled_per_class, &mut rng)?;
        subset.save(&out.join("labeled_subset.txt"))?;
        let sources: Vec<MaskedSample> = subset.entries.iter().map(|e| prepared[e.source].clone()).collect();
        let (lm, lpool) = pipeline::augmented_pool(&sources, p.labeled_pool_per_class, &cfg.augment.semi, res, p.seed ^ 0x1abe1)?;
        write_pool(&out.join("labeled"), &lm, &lpool)?;
    }
    Ok(())
}

pub fn load_pools(data: &Path, labeled: Option<&Path>, mode: TrainMode) -> anyhow::Result<Pools> {
    let unlabeled = tensor_of(&load_set(data)?)?;
    let labeled = match (mode, labeled) {
        (TrainMode::Semi, None) => bail!("semi-supervised training needs --labeled"),
        (TrainMode::Semi, Some(dir)) => {
            let (images, labels) = labeled_tensor(dir)?;
            Some(LabeledPool { images, labels: labels_as_indices(&labels) })
        }
        (TrainMode::Unsupervised, _) => None,
    };
    Ok(Pools { unlabeled, labeled })
}

pub fn cmd_train(cfg: &ExperimentConfig, data: &Path, labeled: Option<&Path>, out: &Path) -> anyhow::Result<()> {
    let pools = load_pools(data, labeled, cfg.train.mode)?;
    write(&out.join("config.toml"), cfg.to_toml())?;
    let existing = list_checkpoints(out).ok().and_then(|v| v.last().cloned());
    let mut trainer = match existing {
        Some((_, dir)) => Trainer::resume(&dir, cfg.train.clone()).with_context(|| format!("resuming {}", dir.display()))?,
        None => Trainer::new(cfg.train.clone())?,
    };
    trainer.run(&pools, Some(out), |r| {
        let ce = r.ce.map_or(String::new(), |c| format!(" ce={c:.5}"));
        eprintln!("g_iter={} wd={:.5} s_r={:.5} s_g={:.5}{ce}", r.g_iter, r.wd, r.s_r, r.s_g);
    })?;
    Ok(())
}

pub fn cmd_train_dae(cfg: &ExperimentConfig, data: &Path, out: &Path) -> anyhow::Result<()> {
    let pool = tensor_of(&load_set(data)?)?;
    write(&out.join("config.toml"), cfg.to_toml())?;
    let mut dae = DaeTrainer::new(cfg.train.clone())?;
    let every = cfg.train.checkpoint_every;
    dae.run(&pool, Some(out), |r| {
        if r.g_iter % every == 0 {
            eprintln!("g_iter={} mse={:.6}", r.g_iter, r.mse);
        }
    })?;
    Ok(())
}

pub fn cmd_validate(
    cfg: &ExperimentConfig,
    checkpoints: &Path,
    valset: &Path,
    network: &str,
    out: &Path,
) -> anyhow::Result<()> {
    let (images, labels) = labeled_tensor(valset)?;
    let table = validate_checkpoints(checkpoints, network, &images, &labels, &cfg.probe, cfg.selection)?;
    write(&out.join("validation.csv"), table.to_csv())?;
    let paths: BTreeMap<u64, PathBuf> = list_checkpoints(checkpoints)?.into_iter().collect();
    let mut list = String::new();
    for g in &table.selected {
        list.push_str(&format!("{}\n", paths[g].display()));
    }
    write(&out.join("selected.txt"), list)
}

/// Checkpoint directories from an ensemble list file or a single directory.
pub fn ensemble_members(spec: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if spec.is_dir() {
        return Ok(vec![spec.to_path_buf()]);
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading ensemble list {}", spec.display()))?;
    let base = spec.parent().unwrap_or(Path::new("."));
    let members: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| if Path::new(l).is_absolute() { PathBuf::from(l) } else { base.join(l) })
        .collect();
    if members.is_empty() {
        bail!("ensemble list {} is empty", spec.display());
    }
    Ok(members)
}

fn write_report(out: &Path, scores: Vec<f64>, labels: Vec<bool>) -> anyhow::Result<MetricReport> {
    let report = MetricReport::from_scores(&ScoredSet::new(scores, labels)?)?;
    write(&out.join("metrics.csv"), report.to_csv())?;
    write(&out.join("roc.csv"), report.roc_csv())?;
    Ok(report)
}

fn load_network(dir: &Path, key: &str) -> anyhow::Result<Network32> {
    let ck = Checkpoint::load(dir)?;
    if !ck.networks.contains_key(key) {
        bail!("checkpoint {} has no `{key}` network", dir.display());
    }
    Ok(ck.network(key)?)
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    ensemble: &Path,
    trainset: &Path,
    testset: &Path,
    network: &str,
    out: &Path,
) -> anyhow::Result<MetricReport> {
    let (train_x, train_y) = labeled_tensor(trainset)?;
    let (test_x, test_y) = labeled_tensor(testset)?;
    let mut per_model = Vec::new();
    for dir in ensemble_members(ensemble)? {
        let mut net = load_network(&dir, network)?;
        let ftr = extract_in_chunks(&mut net, &train_x, 100)?;
        let fte = extract_in_chunks(&mut net, &test_x, 100)?;
        per_model.push(probe_scores(&ftr, &train_y, &fte, &cfg.probe)?);
    }
    write_report(out, ensemble_scores(&per_model)?, test_y)
}

/// Tiles of `n` generated images, `grid` per row, as one RGB image.
pub fn generate_grid(g: &mut Network32, n: usize, grid: usize, seed: u64, prior: catwgan_core::nets::LatentPrior) -> anyhow::Result<Image> {
    if n == 0 || grid == 0 {
        bail!("--n and --grid must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = g.spec().input.c;
    let z = sample_latent(n, latent, prior, &mut rng);
    g.set_mode(Mode::Inference);
    let x = g.run(&z)?;
    let tiles: Vec<Image> = (0..n).map(|i| from_batch(&x, i).map(|t| t.quantize())).collect::<Result<_, _>>()?;
    let (tw, th) = (tiles[0].width, tiles[0].height);
    let cols = grid.min(n);
    let rows = n.div_ceil(cols);
    Ok(Image::from_fn(cols * tw, rows * th, 3, |y, x, c| {
        let i = (y / th) * cols + x / tw;
        tiles.get(i).map_or(0.0, |t| t.at(y % th, x % tw, c))
    }))
}

pub fn cmd_generate(cfg: &ExperimentConfig, checkpoint: &Path, n: usize, grid: usize, out: &Path) -> anyhow::Result<()> {
    let mut g = load_network(checkpoint, "g").context("generator")?;
    let img = generate_grid(&mut g, n, grid, cfg.train.seed, cfg.train.latent_prior)?;
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(img.save_png(out)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum BaselineKind {
    Dae,
    EdgeHist,
    ColorHist,
}

fn histogram_features(samples: &[MaskedSample], kind: BaselineKind) -> anyhow::Result<Features> {
    let rows = samples
        .iter()
        .map(|s| match kind {
            BaselineKind::ColorHist => color_histogram(&s.image, Some(&s.mask), 8),
            _ => edge_histogram(&s.image, Some(&s.mask), 8, 4),
        })
        .collect::<Result<Vec<_>, _>>()?;
    pipeline::features_from_rows(rows)
}

fn dae_feature_set(encoder: &mut Network32, samples: &[MaskedSample]) -> anyhow::Result<Features> {
    let images: Vec<&Image> = samples.iter().map(|s| &s.image).collect();
    let mut rows = Vec::new();
    let mut width = 0;
    for chunk in images.chunks(100) {
        let f = dae_features(encoder, &to_batch(chunk)?)?;
        width = f.len() / chunk.len();
        rows.extend(f.data().iter().map(|&v| v as f64));
    }
    Ok(Features::new(samples.len(), width, rows)?)
}

/// Features for both sets plus the probe report on the test set.
pub fn cmd_baseline(
    cfg: &ExperimentConfig,
    kind: BaselineKind,
    checkpoint: Option<&Path>,
    trainset: &Path,
    testset: &Path,
    out: &Path,
) -> anyhow::Result<(usize, MetricReport)> {
    let train = load_set(trainset)?;
    let test = load_set(testset)?;
    let (ftr, fte) = match kind {
        BaselineKind::Dae => {
            let dir = checkpoint.ok_or_else(|| anyhow!("--kind dae requires --checkpoint"))?;
            let mut enc = load_network(dir, "enc").context("autoencoder")?;
            (dae_feature_set(&mut enc, &train)?, dae_feature_set(&mut enc, &test)?)
        }
        _ => (histogram_features(&train, kind)?, histogram_features(&test, kind)?),
    };
    let scores = probe_scores(&ftr, &labels_of(&train)?, &fte, &cfg.probe)?;
    let report = write_report(out, scores, labels_of(&test)?)?;
    Ok((ftr.width, report))
}
