//! Random geometric augmentation with edge-replicated fill.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::image::{Image, Mask, MaskedSample};

/// Lengths in pixels are stated for a 256-pixel frame and scale with the
/// actual image side.
pub const REFERENCE_SIDE: f64 = 256.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Elastic {
    pub sigma: f64,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationPolicy {
    /// Degrees, counter-clockwise.
    pub rotation_range: (f64, f64),
    pub hflip: bool,
    pub vflip: bool,
    pub elastic: Option<Elastic>,
    pub translation_range: Option<(f64, f64)>,
    pub scale_range: Option<(f64, f64)>,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self::unsupervised()
    }
}

impl AugmentationPolicy {
    pub fn unsupervised() -> Self {
        Self {
            rotation_range: (-180.0, 180.0),
            hflip: true,
            vflip: true,
            elastic: Some(Elastic { sigma: 10.0, magnitude: 10.0 }),
            translation_range: None,
            scale_range: None,
        }
    }

    /// Adds translation and scale jitter used for the labeled pool.
    pub fn semi_supervised() -> Self {
        Self { translation_range: Some((-20.0, 20.0)), scale_range: Some((0.3, 1.5)), ..Self::unsupervised() }
    }

    pub fn identity() -> Self {
        Self {
            rotation_range: (0.0, 0.0),
            hflip: false,
            vflip: false,
            elastic: None,
            translation_range: None,
            scale_range: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if !ordered(self.rotation_range) {
            return Err(DataError::Policy(format!("rotation range {:?}", self.rotation_range)));
        }
        if let Some(e) = self.elastic {
            if !(e.sigma > 0.0 && e.magnitude >= 0.0) {
                return Err(DataError::Policy(format!("elastic {e:?}")));
            }
        }
        if let Some(t) = self.translation_range {
            if !ordered(t) {
                return Err(DataError::Policy(format!("translation range {t:?}")));
            }
        }
        if let Some(s) = self.scale_range {
            if !ordered(s) || s.0 < 0.3 || s.1 > 1.5 {
                return Err(DataError::Policy(format!("scale range {s:?} must lie within [0.3, 1.5]")));
            }
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Remaps every output pixel `(y, x)` to a fractional source location.
fn warp(img: &Image, mut src: impl FnMut(f64, f64) -> (f64, f64)) -> Image {
    let mut out = Image::filled(img.width, img.height, img.channels, 0.0);
    for y in 0..img.height {
        for x in 0..img.width {
            let (sy, sx) = src(y as f64, x as f64);
            for c in 0..img.channels {
                out.set(y, x, c, img.sample_bilinear(sy, sx, c));
            }
        }
    }
    out
}

fn remap_exact(img: &Image, src: impl Fn(usize, usize) -> (usize, usize)) -> Image {
    Image::from_fn(img.width, img.height, img.channels, |y, x, c| {
        let (sy, sx) = src(y, x);
        img.at(sy, sx, c)
    })
}

/// Counter-clockwise rotation about the frame centre. Quarter turns of a
/// square frame are exact permutations.
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let turns = degrees / 90.0;
    let (w, h) = (img.width, img.height);
    if turns == turns.round() && (w == h || turns.rem_euclid(2.0) == 0.0) {
        let n = w - 1;
        let m = h - 1;
        return match turns.rem_euclid(4.0) as u8 {
            0 => img.clone(),
            1 => remap_exact(img, |y, x| (x, n - y)),
            2 => remap_exact(img, |y, x| (m - y, n - x)),
            _ => remap_exact(img, |y, x| (n - x, y)),
        };
    }
    let (s, c) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
    warp(img, |y, x| {
        let (dy, dx) = (y - cy, x - cx);
        (cy + s * dx + c * dy, cx + c * dx - s * dy)
    })
}

pub fn flip_horizontal(img: &Image) -> Image {
    remap_exact(img, |y, x| (y, img.width - 1 - x))
}

pub fn flip_vertical(img: &Image) -> Image {
    remap_exact(img, |y, x| (img.height - 1 - y, x))
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur of a `h x w` field with edge replication.
fn blur(field: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; field.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * field[y * w + (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; field.len()];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[(y as isize + i as isize - r).clamp(0, h as isize - 1) as usize * w + x])
                .sum();
        }
    }
    out
}

/// Smoothed random displacement field scaled so its largest vector has
/// length `magnitude` (both lengths relative to a 256-pixel frame).
pub fn elastic<R: Rng + ?Sized>(img: &Image, e: Elastic, rng: &mut R) -> Image {
    let (w, h) = (img.width, img.height);
    let unit = w.max(h) as f64 / REFERENCE_SIDE;
    let mut noise = || -> Vec<f64> { (0..w * h).map(|_| rng.random_range(-1.0..=1.0)).collect() };
    let (nx, ny) = (noise(), noise());
    if e.magnitude == 0.0 {
        return img.clone();
    }
    let sigma = (e.sigma * unit).max(1e-3);
    let (dx, dy) = (blur(&nx, w, h, sigma), blur(&ny, w, h, sigma));
    let peak = dx.iter().zip(&dy).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
    if peak == 0.0 {
        return img.clone();
    }
    let gain = e.magnitude * unit / peak;
    warp(img, |y, x| {
        let i = y as usize * w + x as usize;
        (y + gain * dy[i], x + gain * dx[i])
    })
}

/// Zoom by `scale` about the centre, then shift by `(ty, tx)` pixels.
pub fn translate_scale(img: &Image, ty: f64, tx: f64, scale: f64) -> Image {
    if ty == 0.0 && tx == 0.0 && scale == 1.0 {
        return img.clone();
    }
    let (cy, cx) = ((img.height - 1) as f64 / 2.0, (img.width - 1) as f64 / 2.0);
    warp(img, |y, x| (cy + (y - cy - ty) / scale, cx + (x - cx - tx) / scale))
}

/// Rotation, flips, elastic deformation, then translation and scale.
pub fn augment<R: Rng + ?Sized>(img: &Image, policy: &AugmentationPolicy, rng: &mut R) -> Image {
    let angle = draw(rng, policy.rotation_range);
    let mut out = if angle == 0.0 { img.clone() } else { rotate(img, angle) };
    if policy.hflip && rng.random_bool(0.5) {
        out = flip_horizontal(&out);
    }
    if policy.vflip && rng.random_bool(0.5) {
        out = flip_vertical(&out);
    }
    if let Some(e) = policy.elastic {
        out = elastic(&out, e, rng);
    }
    let unit = img.width.max(img.height) as f64 / REFERENCE_SIDE;
    let (ty, tx) = match policy.translation_range {
        Some(r) => (draw(rng, r) * unit, draw(rng, r) * unit),
        None => (0.0, 0.0),
    };
    let scale = policy.scale_range.map_or(1.0, |r| draw(rng, r));
    translate_scale(&out, ty, tx, scale)
}

/// Augments image and mask with one shared transform.
pub fn augment_sample<R: Rng + ?Sized>(
    sample: &MaskedSample,
    policy: &AugmentationPolicy,
    rng: &mut R,
) -> Result<MaskedSample> {
    let stacked = sample.image.stack(&sample.mask.to_image())?;
    let out = augment(&stacked, policy, rng);
    MaskedSample::new(out.select_channels(0..3), Mask::from_image(&out, 3), sample.label)
}
