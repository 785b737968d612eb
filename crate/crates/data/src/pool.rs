//! Balanced augmented pools, labeled subsets and their manifests.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{augment_sample, AugmentationPolicy};
use crate::error::{DataError, Result};
use crate::geometry::{crop_lesion, resize_sample};
use crate::image::{Image, Label, Mask, MaskedSample};

pub const MANIFEST_SCHEMA: u32 = 1;
const MAGIC: &str = "catwgan-manifest";
const CLASSES: [Label; 2] = [Label::Benign, Label::Melanoma];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Paths relative to the manifest's directory.
    pub image: String,
    pub mask: String,
    pub label: Option<Label>,
    /// Index into the source list the entry was derived from.
    pub source: usize,
    /// Seed of the entry's own augmentation stream.
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

fn label_str(l: Option<Label>) -> &'static str {
    match l {
        Some(Label::Benign) => "0",
        Some(Label::Melanoma) => "1",
        None => "-",
    }
}

impl DatasetManifest {
    /// `[benign, melanoma]` entry counts.
    pub fn pool_sizes(&self) -> [usize; 2] {
        let mut n = [0; 2];
        for e in &self.entries {
            if let Some(l) = e.label {
                n[l.index()] += 1;
            }
        }
        n
    }

    pub fn to_text(&self) -> String {
        let [b, m] = self.pool_sizes();
        let mut s = format!("{MAGIC}\t{MANIFEST_SCHEMA}\nseed\t{}\npool_sizes\t{b}\t{m}\n", self.seed);
        s.push_str("#image\tmask\tlabel\tsource\tseed\n");
        for e in &self.entries {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", e.image, e.mask, label_str(e.label), e.source, e.seed);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, reason: String| DataError::Manifest { line, reason };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, format!("missing {what}")));
        let (n, head) = next("header")?;
        let head: Vec<&str> = head.split('\t').collect();
        if head.first() != Some(&MAGIC) {
            return Err(err(n, "not a catwgan manifest".into()));
        }
        if head.get(1) != Some(&MANIFEST_SCHEMA.to_string().as_str()) {
            return Err(err(n, format!("unsupported schema version {:?}", head.get(1))));
        }
        let (n, seed_line) = next("seed")?;
        let seed = seed_line
            .strip_prefix("seed\t")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(n, "expected `seed\\t<int>`".into()))?;
        let (n, sizes_line) = next("pool sizes")?;
        let sizes: Vec<usize> = sizes_line
            .strip_prefix("pool_sizes\t")
            .map(|v| v.split('\t').filter_map(|x| x.parse().ok()).collect())
            .unwrap_or_default();
        if sizes.len() != 2 {
            return Err(err(n, "expected `pool_sizes\\t<benign>\\t<melanoma>`".into()));
        }
        let sizes_line_no = n;
        let mut entries = Vec::new();
        for (n, line) in lines {
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(err(n, format!("expected 5 fields, found {}", f.len())));
            }
            let label = match f[2] {
                "0" => Some(Label::Benign),
                "1" => Some(Label::Melanoma),
                "-" => None,
                other => return Err(err(n, format!("bad label `{other}`"))),
            };
            let source = f[3].parse().map_err(|_| err(n, format!("bad source `{}`", f[3])))?;
            let seed = f[4].parse().map_err(|_| err(n, format!("bad seed `{}`", f[4])))?;
            entries.push(ManifestEntry { image: f[0].into(), mask: f[1].into(), label, source, seed });
        }
        let m = Self { seed, entries };
        if m.pool_sizes().as_slice() != sizes.as_slice() {
            return Err(err(sizes_line_no, format!("pool sizes {sizes:?} disagree with entries {:?}", m.pool_sizes())));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io { path: path.into(), source })?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|source| DataError::Io { path: path.into(), source })
    }

    /// Reads the images and masks the entries point to.
    pub fn load_samples(&self, dir: &Path) -> Result<Vec<MaskedSample>> {
        self.entries
            .iter()
            .map(|e| MaskedSample::new(Image::load(&dir.join(&e.image))?, Mask::load(&dir.join(&e.mask))?, e.label))
            .collect()
    }
}

fn entry_paths(i: usize) -> (String, String) {
    (format!("images/{i:06}.png"), format!("masks/{i:06}.png"))
}

/// SplitMix64 finalizer, used to derive independent per-entry seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn class_members(samples: &[MaskedSample], label: Label) -> Vec<usize> {
    (0..samples.len()).filter(|&i| samples[i].label == Some(label)).collect()
}

/// Round-robin over each class's sources until it holds `target_per_class`
/// entries. Each entry gets its own seed, so rendering order does not matter.
pub fn build_pool<R: Rng + ?Sized>(
    samples: &[MaskedSample],
    target_per_class: usize,
    policy: &AugmentationPolicy,
    rng: &mut R,
) -> Result<DatasetManifest> {
    policy.validate()?;
    let seed = rng.random::<u64>();
    let mut entries = Vec::with_capacity(2 * target_per_class);
    if target_per_class == 0 {
        return Ok(DatasetManifest { seed, entries });
    }
    for label in CLASSES {
        let members = class_members(samples, label);
        if members.is_empty() {
            return Err(DataError::MissingClass(label as u8));
        }
        for j in 0..target_per_class {
            let i = entries.len();
            let (image, mask) = entry_paths(i);
            entries.push(ManifestEntry {
                image,
                mask,
                label: Some(label),
                source: members[j % members.len()],
                seed: mix(seed ^ mix(((label as u64) << 48) | j as u64)),
            });
        }
    }
    Ok(DatasetManifest { seed, entries })
}

/// Uniform draw of `per_class` distinct sources from each class.
pub fn select_labeled_subset<R: Rng + ?Sized>(
    samples: &[MaskedSample],
    per_class: usize,
    rng: &mut R,
) -> Result<DatasetManifest> {
    let seed = rng.random::<u64>();
    let mut draw = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(2 * per_class);
    for label in CLASSES {
        let members = class_members(samples, label);
        if members.len() < per_class {
            return Err(DataError::InsufficientClass { label: label as u8, have: members.len(), need: per_class });
        }
        let mut picked: Vec<usize> = index::sample(&mut draw, members.len(), per_class).into_iter().collect();
        picked.sort_unstable();
        for p in picked {
            let (image, mask) = entry_paths(entries.len());
            entries.push(ManifestEntry { image, mask, label: Some(label), source: members[p], seed: 0 });
        }
    }
    Ok(DatasetManifest { seed, entries })
}

/// Working and output resolutions of the preparation pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Resolution {
    /// Side that crops are resized to before augmentation.
    pub work_side: usize,
    /// Side handed to the networks.
    pub out_side: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { work_side: 256, out_side: 64 }
    }
}

/// Lesion crop at the working resolution.
pub fn prepare_source(sample: &MaskedSample, res: Resolution) -> Result<MaskedSample> {
    resize_sample(&crop_lesion(sample)?, res.work_side)
}

/// Augments one pool entry from its prepared source.
pub fn render_entry(
    entry: &ManifestEntry,
    prepared: &[MaskedSample],
    policy: &AugmentationPolicy,
    res: Resolution,
) -> Result<MaskedSample> {
    let src = prepared
        .get(entry.source)
        .ok_or_else(|| DataError::Invalid(format!("entry refers to missing source {}", entry.source)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(entry.seed);
    let out = augment_sample(src, policy, &mut rng)?;
    let out = resize_sample(&out, res.out_side)?;
    Ok(MaskedSample { image: out.image.quantize(), ..out })
}

/// Renders all entries on `workers` threads; the result is ordered by
/// entry and independent of the worker count.
pub fn render_pool(
    manifest: &DatasetManifest,
    prepared: &[MaskedSample],
    policy: &AugmentationPolicy,
    res: Resolution,
    workers: usize,
) -> Result<Vec<MaskedSample>> {
    let workers = workers.max(1).min(manifest.entries.len().max(1));
    let mut slots: Vec<Option<Result<MaskedSample>>> = Vec::new();
    slots.resize_with(manifest.entries.len(), || None);
    let chunk = manifest.entries.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        for (entries, out) in manifest.entries.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            s.spawn(move || {
                for (e, o) in entries.iter().zip(out) {
                    *o = Some(render_entry(e, prepared, policy, res));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot rendered")).collect()
}

/// Writes rendered samples to the paths named in the manifest, plus the
/// manifest itself as `manifest.txt`.
pub fn write_pool(dir: &Path, manifest: &DatasetManifest, samples: &[MaskedSample]) -> Result<()> {
    for sub in ["images", "masks"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|source| DataError::Io { path: p, source })?;
    }
    for (e, s) in manifest.entries.iter().zip(samples) {
        s.image.save_png(&dir.join(&e.image))?;
        s.mask.save_png(&dir.join(&e.mask))?;
    }
    manifest.save(&dir.join("manifest.txt"))
}
