//! In-memory building blocks shared by the subcommands.

use catwgan_core::Tensor;
use catwgan_data::{
    build_pool, prepare_source, render_pool, select_labeled_subset, to_batch, AugmentationPolicy, DatasetManifest,
    Label, MaskedSample, Resolution,
};
use catwgan_eval::Features;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Worker threads for pool rendering.
pub fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn tensor_of(samples: &[MaskedSample]) -> anyhow::Result<Tensor<f32>> {
    let imgs: Vec<_> = samples.iter().map(|s| &s.image).collect();
    Ok(to_batch(&imgs)?)
}

pub fn labels_of(samples: &[MaskedSample]) -> anyhow::Result<Vec<bool>> {
    samples
        .iter()
        .map(|s| s.label.map(|l| l == Label::Melanoma).ok_or_else(|| anyhow::anyhow!("unlabeled sample in a labeled set")))
        .collect()
}

/// Crops every source and resizes it to the working side.
pub fn prepare_all(samples: &[MaskedSample], res: Resolution) -> anyhow::Result<Vec<MaskedSample>> {
    Ok(samples.iter().map(|s| prepare_source(s, res)).collect::<Result<_, _>>()?)
}

/// Crops straight to the network side with no augmentation.
pub fn evaluation_set(samples: &[MaskedSample], side: usize) -> anyhow::Result<Vec<MaskedSample>> {
    prepare_all(samples, Resolution { work_side: side, out_side: side })
}

/// A balanced augmented pool built from `prepared` sources.
pub fn augmented_pool(
    prepared: &[MaskedSample],
    per_class: usize,
    policy: &AugmentationPolicy,
    res: Resolution,
    seed: u64,
) -> anyhow::Result<(DatasetManifest, Vec<MaskedSample>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let manifest = build_pool(prepared, per_class, policy, &mut rng)?;
    let rendered = render_pool(&manifest, prepared, policy, res, workers())?;
    Ok((manifest, rendered))
}

/// `per_class` labeled sources drawn from `prepared`.
pub fn labeled_sources(prepared: &[MaskedSample], per_class: usize, seed: u64) -> anyhow::Result<Vec<MaskedSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subset = select_labeled_subset(prepared, per_class, &mut rng)?;
    Ok(subset.entries.iter().map(|e| prepared[e.source].clone()).collect())
}

pub fn labels_as_indices(labels: &[bool]) -> Vec<usize> {
    labels.iter().map(|&b| b as usize).collect()
}

/// Fixed-width rows of hand-crafted features.
pub fn features_from_rows(rows: Vec<Vec<f64>>) -> anyhow::Result<Features> {
    let width = rows.first().map_or(0, Vec::len);
    let n = rows.len();
    Ok(Features::new(n, width, rows.into_iter().flatten().collect())?)
}
