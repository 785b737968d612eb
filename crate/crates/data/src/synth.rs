//! Synthetic two-class lesion images with exact masks.
//!
//! Class 0: small smooth-shaded ellipses. Class 1: larger irregular
//! multi-lobed blobs with dark speckle and a blue-grey blotch. Palettes
//! overlap, with class 1 biased darker. Both sit on a textured skin-like
//! background.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::{Image, Label, Mask, MaskedSample};

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn jitter<R: Rng>(rng: &mut R, base: [f64; 3], spread: f64) -> [f64; 3] {
    let shift = rng.random_range(-spread..spread);
    base.map(|v| v + shift + rng.random_range(-spread..spread) * 0.3)
}

/// Polar shape: returns the boundary radius (relative to `r0`) at angle `t`.
struct Shape {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    rot: f64,
    lobes: Vec<(f64, f64, f64)>,
}

impl Shape {
    /// Normalized radius of `(y, x)`; inside when below 1.
    fn level(&self, y: f64, x: f64) -> f64 {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let (s, c) = self.rot.sin_cos();
        let u = (c * dx + s * dy) / self.rx;
        let v = (-s * dx + c * dy) / self.ry;
        let r = u.hypot(v);
        let theta = v.atan2(u);
        let boundary = 1.0 + self.lobes.iter().map(|&(k, a, p)| a * (k * theta + p).cos()).sum::<f64>();
        r / boundary
    }
}

fn render<R: Rng>(side: usize, label: Label, rng: &mut R) -> MaskedSample {
    let s = side as f64;
    let noise = Normal::new(0.0, 1.0).unwrap();
    let skin = jitter(rng, [205.0, 165.0, 145.0], 8.0);
    // low-frequency background texture
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let f = rng.random_range(1.0..4.0) / s;
            let a = rng.random_range(0.0..TAU);
            (f * a.cos(), f * a.sin(), rng.random_range(0.0..TAU), rng.random_range(3.0..9.0))
        })
        .collect();
    let melanoma = label == Label::Melanoma;
    // size separates the classes in the full frame; cropping removes it
    let r0 = s * if melanoma { rng.random_range(0.30..0.40) } else { rng.random_range(0.17..0.26) };
    let centre = |rng: &mut R| s / 2.0 + rng.random_range(-0.06..0.06) * s;
    let (cy, cx) = (centre(rng), centre(rng));
    let aspect = rng.random_range(0.65..1.0);
    let (ry, rx) = if rng.random_bool(0.5) { (r0, r0 * aspect) } else { (r0 * aspect, r0) };
    let rot = rng.random_range(0.0..TAU);
    // overlapping palettes, melanoma slightly darker
    let darkness = if melanoma { rng.random_range(0.4..0.75) } else { rng.random_range(0.25..0.6) };
    let inner = jitter(rng, lerp([172.0, 122.0, 96.0], [82.0, 54.0, 46.0], darkness), 10.0);
    let outer = lerp(inner, skin, rng.random_range(0.2..0.5));
    let (lobes, speckle, blotch) = if melanoma {
        let lobes = (0..rng.random_range(2..4))
            .map(|_| (rng.random_range(2..6) as f64, rng.random_range(0.05..0.14), rng.random_range(0.0..TAU)))
            .collect();
        // an off-centre blue-grey region
        let blotch = rng.random_bool(0.8).then(|| {
            let a = rng.random_range(0.0..TAU);
            let d = rng.random_range(0.1..0.4);
            (cy + d * r0 * a.sin(), cx + d * r0 * a.cos(), r0 * rng.random_range(0.25..0.45))
        });
        (lobes, rng.random_range(0.05..0.15), blotch)
    } else {
        (vec![(rng.random_range(2..4) as f64, rng.random_range(0.0..0.04), rng.random_range(0.0..TAU))], 0.0, None)
    };
    let shape = Shape { cy, cx, ry, rx, rot, lobes };
    let mut mask = vec![false; side * side];
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let (fy, fx) = (y as f64 + 0.5, x as f64 + 0.5);
            let level = shape.level(fy, fx);
            let inside = level < 1.0;
            mask[y * side + x] = inside;
            let texture: f64 = waves.iter().map(|&(ky, kx, p, a)| a * (TAU * (ky * fy + kx * fx) + p).sin()).sum();
            let mut px = if inside {
                let mut c = lerp(inner, outer, level.clamp(0.0, 1.0).powf(1.5));
                if let Some((by, bx, br)) = blotch {
                    let t = 1.0 - ((fy - by).hypot(fx - bx) / br).min(1.0);
                    c = lerp(c, [92.0, 94.0, 112.0], 0.5 * t);
                }
                if speckle > 0.0 && rng.random_bool(speckle) {
                    c = c.map(|v| v * 0.7);
                }
                c
            } else {
                skin.map(|v| v + texture)
            };
            for v in &mut px {
                *v += 4.0 * noise.sample(rng);
            }
            data.extend(px.iter().map(|v| v.round().clamp(0.0, 255.0) as f32));
        }
    }
    // guarantee a croppable lesion even for degenerate shapes
    if !mask.iter().any(|&m| m) {
        mask[(side / 2) * side + side / 2] = true;
    }
    MaskedSample {
        image: Image { width: side, height: side, channels: 3, data },
        mask: Mask { width: side, height: side, data: mask },
        label: Some(label),
    }
}

/// `n_per_class` samples of each class, interleaved benign/melanoma.
pub fn synth_dataset(n_per_class: usize, side: usize, seed: u64) -> Vec<MaskedSample> {
    let mut out = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        for label in [Label::Benign, Label::Melanoma] {
            let k = (2 * i + label.index()) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            out.push(render(side, label, &mut rng));
        }
    }
    out
}
