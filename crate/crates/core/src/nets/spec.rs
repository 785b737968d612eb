//! Declarative layer lists and shape propagation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Negative slope of every leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Layer {
    Conv { out: usize, kernel: usize, stride: usize, pad: usize },
    /// Fractionally strided convolution: `stride` is the upsampling factor.
    TransposedConv { out: usize, kernel: usize, stride: usize, pad: usize },
    BatchNorm,
    LeakyRelu,
    Tanh,
    Softmax,
    /// Mean over channels and spatial positions, one value per image.
    GlobalMean,
}

/// Layer stride; `Up(n)` is written `1/n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stride {
    Down(usize),
    Up(usize),
}

impl fmt::Display for Stride {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stride::Down(s) => write!(f, "{s}"),
            Stride::Up(s) => write!(f, "1/{s}"),
        }
    }
}

impl Layer {
    pub fn stride(&self) -> Option<Stride> {
        match *self {
            Layer::Conv { stride, .. } => Some(Stride::Down(stride)),
            Layer::TransposedConv { stride, .. } => Some(Stride::Up(stride)),
            _ => None,
        }
    }

    pub fn kernel(&self) -> Option<usize> {
        match *self {
            Layer::Conv { kernel, .. } | Layer::TransposedConv { kernel, .. } => Some(kernel),
            _ => None,
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, Layer::Conv { .. } | Layer::TransposedConv { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkName {
    Generator,
    Discriminator1,
    Discriminator2,
    DaeEncoder,
    DaeDecoder,
}

impl NetworkName {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkName::Generator => "generator",
            NetworkName::Discriminator1 => "discriminator1",
            NetworkName::Discriminator2 => "discriminator2",
            NetworkName::DaeEncoder => "dae-encoder",
            NetworkName::DaeDecoder => "dae-decoder",
        }
    }
}

impl fmt::Display for NetworkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Channels x height x width of one activation. Vectors (latents,
/// features) are `c x 1 x 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.c * self.h * self.w
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.h == 1 && self.w == 1 && self.c == 1 {
            write!(f, "1")
        } else {
            write!(f, "{}x{}x{}", self.c, self.h, self.w)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: NetworkName,
    pub input: Shape,
    pub layers: Vec<Layer>,
    /// Index of the layer whose output is the exported feature vector.
    #[serde(default)]
    pub features_at: Option<usize>,
}

impl NetworkSpec {
    /// Output shape after every layer, given the declared input.
    pub fn propagate(&self) -> Result<Vec<Shape>> {
        self.propagate_from(self.input)
    }

    /// Output shape after every layer for an arbitrary input shape.
    pub fn propagate_from(&self, input: Shape) -> Result<Vec<Shape>> {
        let mut cur = input;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match *layer {
                Layer::Conv { out, kernel, stride, pad } => {
                    let span_h = cur.h + 2 * pad;
                    let span_w = cur.w + 2 * pad;
                    if span_h < kernel || span_w < kernel || stride == 0 {
                        return Err(Error::Invalid(format!(
                            "layer {i}: {kernel}x{kernel} kernel does not fit {cur}"
                        )));
                    }
                    Shape::new(out, (span_h - kernel) / stride + 1, (span_w - kernel) / stride + 1)
                }
                Layer::TransposedConv { out, kernel, stride, pad } => {
                    let h = ((cur.h - 1) * stride + kernel).checked_sub(2 * pad);
                    let w = ((cur.w - 1) * stride + kernel).checked_sub(2 * pad);
                    match (h, w) {
                        (Some(h), Some(w)) if h > 0 && w > 0 => Shape::new(out, h, w),
                        _ => return Err(Error::Invalid(format!("layer {i}: padding too large"))),
                    }
                }
                Layer::GlobalMean => Shape::new(1, 1, 1),
                Layer::BatchNorm | Layer::LeakyRelu | Layer::Tanh | Layer::Softmax => cur,
            };
            out.push(cur);
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(self.propagate()?.last().copied().unwrap_or(self.input))
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| *l == Layer::BatchNorm)
    }

    /// Groups layers into blocks that each start at a convolution (or a
    /// standalone activation) and returns a readable description with the
    /// block's output shape, in the style of an architecture table.
    pub fn table(&self) -> Result<Vec<(String, Shape)>> {
        let shapes = self.propagate()?;
        let mut rows: Vec<(String, Shape)> = Vec::new();
        let mut open = false;
        for (layer, shape) in self.layers.iter().zip(&shapes) {
            let suffix = match layer {
                Layer::BatchNorm => Some("+BN"),
                Layer::LeakyRelu => Some("+lReLU"),
                _ => None,
            };
            match (suffix, open, rows.last_mut()) {
                (Some(s), true, Some(row)) => {
                    row.0.push_str(s);
                    row.1 = *shape;
                    continue;
                }
                _ => {}
            }
            let text = match *layer {
                Layer::Conv { out, kernel, stride, .. } if stride == 1 => {
                    format!("{out}x{kernel}x{kernel} conv.")
                }
                Layer::Conv { out, kernel, stride, .. } => {
                    format!("{out}x{kernel}x{kernel} conv. stride {stride}")
                }
                Layer::TransposedConv { out, kernel, stride, .. } if stride == 1 => {
                    format!("{out}x{kernel}x{kernel} conv.")
                }
                Layer::TransposedConv { out, kernel, stride, .. } => {
                    format!("{out}x{kernel}x{kernel} conv. stride 1/{stride}")
                }
                Layer::Tanh => "tanh".into(),
                Layer::Softmax => format!("{}-way softmax", shape.c),
                Layer::GlobalMean => "average".into(),
                Layer::BatchNorm => "BN".into(),
                Layer::LeakyRelu => "lReLU".into(),
            };
            open = layer.is_conv();
            rows.push((text, *shape));
        }
        Ok(rows)
    }
}

/// Receptive field in pixels of a purely convolutional stack:
/// `r <- r + (k - 1) * j`, `j <- j * s`.
pub fn receptive_field(spec: &NetworkSpec) -> Result<usize> {
    let mut r = 1;
    let mut jump = 1;
    for (i, layer) in spec.layers.iter().enumerate() {
        match *layer {
            Layer::Conv { kernel, stride, .. } => {
                r += (kernel - 1) * jump;
                jump *= stride;
            }
            Layer::TransposedConv { .. } => return Err(Error::ReceptiveFieldUndefined(i)),
            _ => {}
        }
    }
    Ok(r)
}

/// Sizes of the three networks and the autoencoder baseline.
///
/// The default reproduces the 64x64 architecture; smaller images and
/// narrower widths give desk-scale variants with the same topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    /// Square image side; a power of two, at least 8.
    pub image_side: usize,
    /// Width of D1's first convolution; doubles per downsampling stage.
    pub base_width: usize,
    /// Width of D1's penultimate (feature) layer.
    pub feature_width: usize,
    pub latent_dim: usize,
    pub classes: usize,
    /// Number of stride-2 convolutions in D2.
    pub critic_depth: usize,
    /// Width of D2's first convolution; doubles per layer.
    pub critic_width: usize,
    /// Drop BN + lReLU on D1's logits.
    pub plain_logit_head: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            image_side: 64,
            base_width: 64,
            feature_width: 512,
            latent_dim: 100,
            classes: 2,
            critic_depth: 3,
            critic_width: 64,
            plain_logit_head: false,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_side < 8 || !self.image_side.is_power_of_two() {
            return Err(Error::Invalid(format!(
                "image_side must be a power of two >= 8, got {}",
                self.image_side
            )));
        }
        if self.classes < 2 {
            return Err(Error::Invalid("need at least 2 classes".into()));
        }
        if self.latent_dim == 0 || self.base_width == 0 || self.feature_width == 0 || self.critic_width == 0 {
            return Err(Error::Invalid("widths must be positive".into()));
        }
        if self.critic_depth == 0 {
            return Err(Error::Invalid("critic needs at least one convolution".into()));
        }
        let needed = receptive_field(&d2_spec(self))?;
        if needed > self.image_side {
            return Err(Error::InputTooSmall { needed, got: self.image_side });
        }
        Ok(())
    }

    /// Stride-2 stages taking the image down to 4x4.
    pub fn stages(&self) -> usize {
        (self.image_side / 4).trailing_zeros() as usize
    }

    fn stage_widths(&self) -> Vec<usize> {
        (0..self.stages()).map(|i| self.base_width << i).collect()
    }
}

fn down(out: usize) -> Layer {
    Layer::Conv { out, kernel: 4, stride: 2, pad: 1 }
}

fn up(out: usize) -> Layer {
    Layer::TransposedConv { out, kernel: 4, stride: 2, pad: 1 }
}

/// Convolution stack shared by D1 and the autoencoder's encoder: image to
/// `feature_width x 1 x 1` after BN + lReLU.
fn encoder_layers(cfg: &ArchConfig) -> Vec<Layer> {
    let mut layers = Vec::new();
    for w in cfg.stage_widths() {
        layers.extend([down(w), Layer::BatchNorm, Layer::LeakyRelu]);
    }
    layers.extend([
        Layer::Conv { out: cfg.feature_width, kernel: 4, stride: 1, pad: 0 },
        Layer::BatchNorm,
        Layer::LeakyRelu,
    ]);
    layers
}

pub fn generator_spec(cfg: &ArchConfig) -> NetworkSpec {
    let mut widths = cfg.stage_widths();
    widths.reverse();
    let mut layers = vec![
        Layer::TransposedConv { out: widths[0], kernel: 4, stride: 1, pad: 0 },
        Layer::BatchNorm,
        Layer::LeakyRelu,
    ];
    for &w in widths.iter().skip(1) {
        layers.extend([up(w), Layer::BatchNorm, Layer::LeakyRelu]);
    }
    layers.extend([up(3), Layer::BatchNorm, Layer::LeakyRelu, Layer::Tanh]);
    NetworkSpec {
        name: NetworkName::Generator,
        input: Shape::new(cfg.latent_dim, 1, 1),
        layers,
        features_at: None,
    }
}

pub fn d1_spec(cfg: &ArchConfig) -> NetworkSpec {
    let mut layers = encoder_layers(cfg);
    let features_at = layers.len() - 1;
    layers.push(Layer::Conv { out: cfg.classes, kernel: 1, stride: 1, pad: 0 });
    if !cfg.plain_logit_head {
        layers.extend([Layer::BatchNorm, Layer::LeakyRelu]);
    }
    layers.push(Layer::Softmax);
    NetworkSpec {
        name: NetworkName::Discriminator1,
        input: Shape::new(3, cfg.image_side, cfg.image_side),
        layers,
        features_at: Some(features_at),
    }
}

pub fn d2_spec(cfg: &ArchConfig) -> NetworkSpec {
    let mut layers = Vec::new();
    for i in 0..cfg.critic_depth {
        layers.extend([down(cfg.critic_width << i), Layer::LeakyRelu]);
    }
    layers.push(Layer::GlobalMean);
    NetworkSpec {
        name: NetworkName::Discriminator2,
        input: Shape::new(3, cfg.image_side, cfg.image_side),
        layers,
        features_at: None,
    }
}

pub fn dae_encoder_spec(cfg: &ArchConfig) -> NetworkSpec {
    let layers = encoder_layers(cfg);
    NetworkSpec {
        name: NetworkName::DaeEncoder,
        input: Shape::new(3, cfg.image_side, cfg.image_side),
        features_at: Some(layers.len() - 1),
        layers,
    }
}

pub fn dae_decoder_spec(cfg: &ArchConfig) -> NetworkSpec {
    let mut widths = cfg.stage_widths();
    widths.reverse();
    let mut layers = vec![
        Layer::TransposedConv { out: widths[0], kernel: 4, stride: 1, pad: 0 },
        Layer::BatchNorm,
        Layer::LeakyRelu,
    ];
    for &w in widths.iter().skip(1) {
        layers.extend([up(w), Layer::BatchNorm, Layer::LeakyRelu]);
    }
    layers.extend([up(3), Layer::Tanh]);
    NetworkSpec {
        name: NetworkName::DaeDecoder,
        input: Shape::new(cfg.feature_width, 1, 1),
        layers,
        features_at: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(spec: &NetworkSpec) -> Vec<(String, String)> {
        spec.table()
            .unwrap()
            .into_iter()
            .map(|(d, s)| (d, s.to_string()))
            .collect()
    }

    fn expect(spec: &NetworkSpec, table: &[(&str, &str)]) {
        let got = rows(spec);
        let want: Vec<(String, String)> = table.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn generator_table() {
        expect(
            &generator_spec(&ArchConfig::default()),
            &[
                ("512x4x4 conv.+BN+lReLU", "512x4x4"),
                ("256x4x4 conv. stride 1/2+BN+lReLU", "256x8x8"),
                ("128x4x4 conv. stride 1/2+BN+lReLU", "128x16x16"),
                ("64x4x4 conv. stride 1/2+BN+lReLU", "64x32x32"),
                ("3x4x4 conv. stride 1/2+BN+lReLU", "3x64x64"),
                ("tanh", "3x64x64"),
            ],
        );
    }

    #[test]
    fn d1_table() {
        expect(
            &d1_spec(&ArchConfig::default()),
            &[
                ("64x4x4 conv. stride 2+BN+lReLU", "64x32x32"),
                ("128x4x4 conv. stride 2+BN+lReLU", "128x16x16"),
                ("256x4x4 conv. stride 2+BN+lReLU", "256x8x8"),
                ("512x4x4 conv. stride 2+BN+lReLU", "512x4x4"),
                ("512x4x4 conv.+BN+lReLU", "512x1x1"),
                ("2x1x1 conv.+BN+lReLU", "2x1x1"),
                ("2-way softmax", "2x1x1"),
            ],
        );
    }

    #[test]
    fn d2_table_and_patch() {
        let spec = d2_spec(&ArchConfig::default());
        // activations follow every convolution; the table lists bare convs
        let shapes: Vec<String> = spec.table().unwrap().into_iter().map(|(_, s)| s.to_string()).collect();
        assert_eq!(shapes, ["64x32x32", "128x16x16", "256x8x8", "1"]);
        assert!(!spec.has_batch_norm());
        assert_eq!(receptive_field(&spec).unwrap(), 22);
    }

    #[test]
    fn receptive_field_examples() {
        let one = NetworkSpec {
            name: NetworkName::Discriminator2,
            input: Shape::new(1, 8, 8),
            layers: vec![down(1)],
            features_at: None,
        };
        assert_eq!(receptive_field(&one).unwrap(), 4);
        let two = NetworkSpec {
            layers: vec![
                Layer::Conv { out: 1, kernel: 3, stride: 1, pad: 0 },
                Layer::LeakyRelu,
                Layer::Conv { out: 1, kernel: 3, stride: 1, pad: 0 },
            ],
            ..one.clone()
        };
        assert_eq!(receptive_field(&two).unwrap(), 5);
        assert!(matches!(
            receptive_field(&generator_spec(&ArchConfig::default())),
            Err(Error::ReceptiveFieldUndefined(0))
        ));
    }

    #[test]
    fn scaled_variants_keep_topology() {
        let cfg = ArchConfig { image_side: 8, base_width: 4, feature_width: 16, critic_depth: 1, ..Default::default() };
        assert_eq!(generator_spec(&cfg).output_shape().unwrap(), Shape::new(3, 8, 8));
        assert_eq!(d1_spec(&cfg).output_shape().unwrap(), Shape::new(2, 1, 1));
        assert_eq!(d2_spec(&cfg).output_shape().unwrap(), Shape::new(1, 1, 1));
        assert_eq!(dae_decoder_spec(&cfg).output_shape().unwrap(), Shape::new(3, 8, 8));
        let enc = dae_encoder_spec(&cfg);
        assert_eq!(enc.output_shape().unwrap(), Shape::new(16, 1, 1));
        assert!(ArchConfig { image_side: 12, ..cfg }.validate().is_err());
    }

    #[test]
    fn stride_display() {
        assert_eq!(Stride::Up(2).to_string(), "1/2");
        assert_eq!(up(3).stride(), Some(Stride::Up(2)));
        assert_eq!(Layer::Tanh.kernel(), None);
    }
}
