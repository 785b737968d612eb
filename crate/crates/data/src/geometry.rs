//! Lesion cropping and bilinear resizing.

use crate::error::{DataError, Result};
use crate::image::{Image, Mask, MaskedSample};

/// Inclusive bounding box of the mask's positive pixels, `(top, left, bottom, right)`.
pub fn bounding_box(mask: &Mask) -> Option<(usize, usize, usize, usize)> {
    let mut bb: Option<(usize, usize, usize, usize)> = None;
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.at(y, x) {
                bb = Some(match bb {
                    None => (y, x, y, x),
                    Some((t, l, b, r)) => (t.min(y), l.min(x), b.max(y), r.max(x)),
                });
            }
        }
    }
    bb
}

/// Start of a window of length `side` around `[lo, hi]`, shifted inside
/// `[0, len)` when it fits there.
fn window(lo: usize, hi: usize, side: usize, len: usize) -> isize {
    let extent = hi - lo + 1;
    let start = lo as isize - ((side - extent) / 2) as isize;
    if side <= len {
        start.clamp(0, (len - side) as isize)
    } else {
        // larger than the frame: centre it and replicate edges
        -(((side - len) / 2) as isize)
    }
}

/// Smallest square around the lesion, keeping the mask alongside.
pub fn crop_lesion(sample: &MaskedSample) -> Result<MaskedSample> {
    let (t, l, b, r) = bounding_box(&sample.mask).ok_or(DataError::NoLesion)?;
    let side = (b - t + 1).max(r - l + 1);
    let y0 = window(t, b, side, sample.image.height);
    let x0 = window(l, r, side, sample.image.width);
    let img = &sample.image;
    let image = Image::from_fn(side, side, img.channels, |y, x, c| img.at_clamped(y0 + y as isize, x0 + x as isize, c));
    // padding replicates image content but never lesion membership
    let mask = Mask::from_fn(side, side, |y, x| {
        let (sy, sx) = (y0 + y as isize, x0 + x as isize);
        (0..img.height as isize).contains(&sy)
            && (0..img.width as isize).contains(&sx)
            && sample.mask.at(sy as usize, sx as usize)
    });
    MaskedSample::new(image, mask, sample.label)
}

/// Bilinear resampling to `side x side` on a corner-aligned grid.
pub fn resize_bilinear(image: &Image, side: usize) -> Result<Image> {
    resize_to(image, side, side)
}

pub fn resize_to(image: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(DataError::Invalid("resize target must be at least 1 pixel".into()));
    }
    if (width, height) == (image.width, image.height) {
        return Ok(image.clone());
    }
    let coord = |i: usize, out: usize, inp: usize| -> f64 {
        if out == 1 {
            (inp - 1) as f64 / 2.0
        } else {
            i as f64 * (inp - 1) as f64 / (out - 1) as f64
        }
    };
    Ok(Image::from_fn(width, height, image.channels, |y, x, c| {
        image.sample_bilinear(coord(y, height, image.height), coord(x, width, image.width), c)
    }))
}

/// Resizes image and mask together; the mask is resampled bilinearly and
/// thresholded at one half.
pub fn resize_sample(sample: &MaskedSample, side: usize) -> Result<MaskedSample> {
    let stacked = sample.image.stack(&sample.mask.to_image())?;
    let r = resize_bilinear(&stacked, side)?;
    MaskedSample::new(r.select_channels(0..3), Mask::from_image(&r, 3), sample.label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(w: usize, h: usize, mask: impl FnMut(usize, usize) -> bool) -> MaskedSample {
        let img = Image::from_fn(w, h, 3, |y, x, c| ((y * 7 + x * 3 + c) % 256) as f32);
        MaskedSample::new(img, Mask::from_fn(w, h, mask), None).unwrap()
    }

    #[test]
    fn crop_examples() {
        let s = sample(100, 100, |y, x| (10..=20).contains(&y) && (30..=50).contains(&x));
        let c = crop_lesion(&s).unwrap();
        assert_eq!((c.image.width, c.image.height), (21, 21));
        assert_eq!(c.mask.count(), s.mask.count());

        let full = sample(100, 100, |_, _| true);
        assert_eq!(crop_lesion(&full).unwrap().image, full.image);

        let one = sample(9, 9, |y, x| y == 4 && x == 6);
        let c = crop_lesion(&one).unwrap();
        assert_eq!((c.image.width, c.image.height), (1, 1));
        assert_eq!(c.image.data, vec![one.image.at(4, 6, 0), one.image.at(4, 6, 1), one.image.at(4, 6, 2)]);

        let empty = sample(4, 4, |_, _| false);
        assert_eq!(crop_lesion(&empty).unwrap_err().to_string(), "no lesion pixels");
    }

    #[test]
    fn crop_wider_than_image_pads() {
        // 10 wide diagonal on a 4-tall frame needs a 10x10 square
        let s = sample(10, 4, |y, x| (y == 0 && x == 0) || (y == 3 && x == 9));
        let c = crop_lesion(&s).unwrap();
        assert_eq!((c.image.width, c.image.height), (10, 10));
        assert_eq!(c.mask.count(), 2);
        assert_eq!(c.image.at(0, 0, 0), s.image.at(0, 0, 0));
        assert_eq!(c.image.at(9, 9, 0), s.image.at(3, 9, 0));
    }

    #[test]
    fn resize_examples() {
        let k = Image::filled(5, 7, 3, 42.0);
        let r = resize_bilinear(&k, 11).unwrap();
        assert!(r.data.iter().all(|&v| (v - 42.0).abs() < 1e-4));

        let same = Image::from_fn(16, 16, 1, |y, x, _| (y * 16 + x) as f32);
        assert_eq!(resize_bilinear(&same, 16).unwrap(), same);

        let checker = Image::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let up = resize_bilinear(&checker, 3).unwrap();
        assert_eq!(up.at(1, 1, 0), 0.5);
        assert_eq!(up.at(0, 0, 0), 0.0);
        assert_eq!(up.at(0, 2, 0), 1.0);
    }
}
