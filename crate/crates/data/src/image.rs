//! Floating-point images and binary masks.

use std::path::Path;

use crate::error::{DataError, Result};

/// Interleaved `height x width x channels` samples on the 8-bit scale
/// (0..=255), stored as `f32` so that resampling stays exact until the
/// final quantization.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels || width == 0 || height == 0 || channels == 0 {
            return Err(DataError::Invalid(format!(
                "{} samples do not fill {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self { width, height, channels, data: vec![value; width * height * channels] }
    }

    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { width, height, channels, data }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Sample with coordinates clamped to the frame (edge replication).
    #[inline]
    pub fn at_clamped(&self, y: isize, x: isize, c: usize) -> f32 {
        let y = y.clamp(0, self.height as isize - 1) as usize;
        let x = x.clamp(0, self.width as isize - 1) as usize;
        self.at(y, x, c)
    }

    /// Bilinear sample at fractional coordinates with edge replication.
    pub fn sample_bilinear(&self, y: f64, x: f64, c: usize) -> f32 {
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let (y0, x0) = (y0 as isize, x0 as isize);
        let v00 = self.at_clamped(y0, x0, c) as f64;
        let v01 = self.at_clamped(y0, x0 + 1, c) as f64;
        let v10 = self.at_clamped(y0 + 1, x0, c) as f64;
        let v11 = self.at_clamped(y0 + 1, x0 + 1, c) as f64;
        let top = v00 + (v01 - v00) * fx;
        let bottom = v10 + (v11 - v10) * fx;
        (top + (bottom - top) * fy) as f32
    }

    /// Channels `range` as a new image.
    pub fn select_channels(&self, range: std::ops::Range<usize>) -> Image {
        let n = range.len();
        Image::from_fn(self.width, self.height, n, |y, x, c| self.at(y, x, range.start + c))
    }

    pub fn stack(&self, other: &Image) -> Result<Image> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(DataError::Invalid("cannot stack images of different size".into()));
        }
        let c = self.channels + other.channels;
        Ok(Image::from_fn(self.width, self.height, c, |y, x, k| {
            if k < self.channels {
                self.at(y, x, k)
            } else {
                other.at(y, x, k - self.channels)
            }
        }))
    }

    /// Rounds to 8 bits, clamping to 0..=255.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn quantize(&self) -> Image {
        Image { data: self.to_u8().into_iter().map(f32::from).collect(), ..self.clone() }
    }

    pub fn load(path: &Path) -> Result<Image> {
        let img = image::open(path).map_err(|source| DataError::Image { path: path.into(), source })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Image::new(w as usize, h as usize, 3, rgb.into_raw().into_iter().map(f32::from).collect())
    }

    /// Writes a PNG (1 or 3 channels).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            c => return Err(DataError::Invalid(format!("cannot write {c}-channel PNG"))),
        };
        image::save_buffer(path, &self.to_u8(), self.width as u32, self.height as u32, color)
            .map_err(|source| DataError::Image { path: path.into(), source })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(DataError::Invalid(format!("{} mask pixels do not fill {width}x{height}", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// 0/255 single-channel image.
    pub fn to_image(&self) -> Image {
        Image::from_fn(self.width, self.height, 1, |y, x, _| if self.at(y, x) { 255.0 } else { 0.0 })
    }

    /// Pixels at or above half scale are lesion.
    pub fn from_image(img: &Image, channel: usize) -> Mask {
        Mask::from_fn(img.width, img.height, |y, x| img.at(y, x, channel) >= 127.5)
    }

    /// Any nonzero pixel of the first channel is lesion.
    pub fn load(path: &Path) -> Result<Mask> {
        let img = image::open(path).map_err(|source| DataError::Image { path: path.into(), source })?;
        let l = img.to_luma8();
        let (w, h) = l.dimensions();
        Mask::new(w as usize, h as usize, l.into_raw().into_iter().map(|v| v != 0).collect())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_image().save_png(path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Benign = 0,
    Melanoma = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Benign),
            1 => Some(Label::Melanoma),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskedSample {
    pub image: Image,
    pub mask: Mask,
    pub label: Option<Label>,
}

impl MaskedSample {
    pub fn new(image: Image, mask: Mask, label: Option<Label>) -> Result<Self> {
        if image.channels != 3 {
            return Err(DataError::Invalid(format!("expected RGB image, got {} channels", image.channels)));
        }
        if (image.width, image.height) != (mask.width, mask.height) {
            return Err(DataError::MaskSize {
                image_w: image.width,
                image_h: image.height,
                mask_w: mask.width,
                mask_h: mask.height,
            });
        }
        Ok(Self { image, mask, label })
    }
}

/// Linear map of 8-bit values onto `[-1, 1]`.
pub fn to_model_range(v: f32) -> f32 {
    v / 127.5 - 1.0
}

pub fn from_model_range(v: f32) -> f32 {
    (v + 1.0) * 127.5
}

/// Stacks RGB images into an NCHW tensor in model range.
pub fn to_batch(images: &[&Image]) -> Result<catwgan_core::Tensor<f32>> {
    let first = images.first().ok_or_else(|| DataError::Invalid("empty image batch".into()))?;
    let (w, h) = (first.width, first.height);
    let mut data = Vec::with_capacity(images.len() * 3 * w * h);
    for img in images {
        if (img.width, img.height, img.channels) != (w, h, 3) {
            return Err(DataError::Invalid("images in a batch must share size".into()));
        }
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    data.push(to_model_range(img.at(y, x, c)));
                }
            }
        }
    }
    catwgan_core::Tensor::new(&[images.len(), 3, h, w], data).map_err(|e| DataError::Invalid(e.to_string()))
}

/// Inverse of [`to_batch`] for one NCHW item.
pub fn from_batch(t: &catwgan_core::Tensor<f32>, index: usize) -> Result<Image> {
    let &[n, c, h, w] = t.shape() else {
        return Err(DataError::Invalid(format!("expected NCHW tensor, got {:?}", t.shape())));
    };
    if index >= n {
        return Err(DataError::Invalid(format!("index {index} outside batch of {n}")));
    }
    let base = index * c * h * w;
    Ok(Image::from_fn(w, h, c, |y, x, k| from_model_range(t.data()[base + k * h * w + y * w + x])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_range_endpoints() {
        assert_eq!(to_model_range(0.0), -1.0);
        assert_eq!(to_model_range(255.0), 1.0);
        assert_eq!(to_model_range(127.5), 0.0);
        for v in 0..=255u8 {
            let back = from_model_range(to_model_range(v as f32)).round() as u8;
            assert_eq!(back, v);
        }
    }

    #[test]
    fn batch_round_trip() {
        let a = Image::from_fn(3, 2, 3, |y, x, c| (y * 50 + x * 20 + c * 7) as f32);
        let t = to_batch(&[&a, &a]).unwrap();
        assert_eq!(t.shape(), &[2, 3, 2, 3]);
        assert_eq!(from_batch(&t, 1).unwrap().quantize(), a);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = Image::from_fn(5, 4, 3, |y, x, c| ((y * 31 + x * 17 + c * 5) % 256) as f32);
        let p = dir.path().join("a.png");
        a.save_png(&p).unwrap();
        assert_eq!(Image::load(&p).unwrap(), a);
        let m = Mask::from_fn(5, 4, |y, x| (x + y) % 3 == 0);
        let q = dir.path().join("m.png");
        m.save_png(&q).unwrap();
        assert_eq!(Mask::load(&q).unwrap(), m);
    }
}
