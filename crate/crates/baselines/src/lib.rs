//! Hand-crafted histogram features and autoencoder features, shaped for
//! the same linear probe as the learned features.

use catwgan_core::{Mode, NetworkHandle, NetworkName, Tensor};
use catwgan_data::{Image, Mask};

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("no lesion pixels")]
    EmptyMask,
    #[error("image must be at least 2x2 for gradients")]
    TooSmall,
    #[error("expected a 3-channel image, got {0}")]
    Channels(usize),
    #[error("mask does not match image size")]
    MaskSize,
    #[error("bin counts must be positive")]
    Bins,
    #[error(transparent)]
    Core(#[from] catwgan_core::Error),
}

pub type Result<T, E = BaselineError> = std::result::Result<T, E>;

/// Largest central-difference gradient magnitude on 8-bit luminance.
pub const MAX_GRADIENT: f64 = 127.5 * std::f64::consts::SQRT_2;

/// Upper edges of the lower magnitude bins, as fractions of
/// [`MAX_GRADIENT`], for the default four bins; other counts split the
/// range geometrically.
const MAGNITUDE_EDGES_4: [f64; 3] = [1.0 / 64.0, 1.0 / 16.0, 1.0 / 4.0];

fn check(image: &Image, mask: Option<&Mask>) -> Result<()> {
    if image.channels != 3 {
        return Err(BaselineError::Channels(image.channels));
    }
    if let Some(m) = mask {
        if (m.width, m.height) != (image.width, image.height) {
            return Err(BaselineError::MaskSize);
        }
        if m.count() == 0 {
            return Err(BaselineError::EmptyMask);
        }
    }
    Ok(())
}

fn normalize(mut h: Vec<f64>) -> Vec<f64> {
    let s: f64 = h.iter().sum();
    for v in &mut h {
        *v /= s;
    }
    h
}

fn inside(mask: Option<&Mask>, y: usize, x: usize) -> bool {
    mask.is_none_or(|m| m.at(y, x))
}

/// Joint RGB histogram with `bins_per_channel^3` cells over the mask's
/// pixels (all pixels without a mask), L1-normalized.
pub fn color_histogram(image: &Image, mask: Option<&Mask>, bins_per_channel: usize) -> Result<Vec<f64>> {
    check(image, mask)?;
    if bins_per_channel == 0 {
        return Err(BaselineError::Bins);
    }
    let b = bins_per_channel;
    let bin = |v: f32| ((v.clamp(0.0, 255.0) as f64 * b as f64 / 256.0) as usize).min(b - 1);
    let mut h = vec![0.0; b * b * b];
    for y in 0..image.height {
        for x in 0..image.width {
            if inside(mask, y, x) {
                let (r, g, bl) = (bin(image.at(y, x, 0)), bin(image.at(y, x, 1)), bin(image.at(y, x, 2)));
                h[(r * b + g) * b + bl] += 1.0;
            }
        }
    }
    Ok(normalize(h))
}

/// Rec. 601 luma scaled by 1000 so integer pixels give exact integers.
fn luma_milli(image: &Image, y: usize, x: usize) -> f64 {
    299.0 * image.at(y, x, 0) as f64 + 587.0 * image.at(y, x, 1) as f64 + 114.0 * image.at(y, x, 2) as f64
}

fn magnitude_edges(bins: usize) -> Vec<f64> {
    if bins == 4 {
        return MAGNITUDE_EDGES_4.iter().map(|f| f * MAX_GRADIENT).collect();
    }
    // halve the upper edge for each lower bin
    (1..bins).rev().map(|k| MAX_GRADIENT / 4f64.powi(k as i32)).collect()
}

/// Histogram over (magnitude, orientation) of central-difference
/// luminance gradients with edge replication, L1-normalized. Row-major in
/// magnitude: entry `m * orientation_bins + o`. Orientation bins are
/// centred on multiples of `360 / orientation_bins` degrees, so axis
/// directions never straddle a boundary. Zero gradients land in column 0.
pub fn edge_histogram(
    image: &Image,
    mask: Option<&Mask>,
    orientation_bins: usize,
    magnitude_bins: usize,
) -> Result<Vec<f64>> {
    check(image, mask)?;
    if image.width < 2 && image.height < 2 {
        return Err(BaselineError::TooSmall);
    }
    if orientation_bins == 0 || magnitude_bins == 0 {
        return Err(BaselineError::Bins);
    }
    let (w, h) = (image.width, image.height);
    let lum: Vec<f64> = (0..h).flat_map(|y| (0..w).map(move |x| (y, x))).map(|(y, x)| luma_milli(image, y, x)).collect();
    let at = |y: isize, x: isize| lum[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];
    let edges = magnitude_edges(magnitude_bins);
    let width = std::f64::consts::TAU / orientation_bins as f64;
    let mut hist = vec![0.0; orientation_bins * magnitude_bins];
    for y in 0..h {
        for x in 0..w {
            if !inside(mask, y, x) {
                continue;
            }
            let (yi, xi) = (y as isize, x as isize);
            let gx = (at(yi, xi + 1) - at(yi, xi - 1)) / 2000.0;
            // image rows grow downward; flip so angles are counter-clockwise
            let gy = (at(yi - 1, xi) - at(yi + 1, xi)) / 2000.0;
            let mag = gx.hypot(gy);
            let m = edges.iter().take_while(|&&e| mag >= e).count();
            let theta = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
            let o = ((theta / width + 0.5).floor() as usize) % orientation_bins;
            hist[m * orientation_bins + o] += 1.0;
        }
    }
    Ok(normalize(hist))
}

/// Encoder outputs for a batch; the encoder must be in inference mode.
pub fn dae_features(encoder: &mut NetworkHandle<f32>, images: &Tensor<f32>) -> Result<Tensor<f32>> {
    if encoder.mode() != Mode::Inference {
        return Err(catwgan_core::Error::RequiresInference("autoencoder features").into());
    }
    if encoder.name() != NetworkName::DaeEncoder {
        return Err(catwgan_core::Error::Invalid(format!("{} is not an autoencoder encoder", encoder.name())).into());
    }
    Ok(encoder.run(images)?)
}
