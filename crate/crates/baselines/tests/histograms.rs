use catwgan_baselines::{color_histogram, edge_histogram};
use catwgan_data::augment::rotate;
use catwgan_data::Image;
use proptest::prelude::*;

fn image() -> impl Strategy<Value = Image> {
    (2usize..12, 2usize..12).prop_flat_map(|(w, h)| {
        prop::collection::vec(0u8..=200, w * h * 3)
            .prop_map(move |v| Image::new(w, h, 3, v.into_iter().map(f32::from).collect()).unwrap())
    })
}

proptest! {
    #[test]
    fn histograms_are_normalized(img in image()) {
        for h in [color_histogram(&img, None, 8).unwrap(), edge_histogram(&img, None, 8, 4).unwrap()] {
            prop_assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(h.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn edge_histogram_ignores_brightness(img in image(), offset in 1u8..=55) {
        let brighter = Image { data: img.data.iter().map(|v| v + offset as f32).collect(), ..img.clone() };
        prop_assert_eq!(edge_histogram(&img, None, 8, 4).unwrap(), edge_histogram(&brighter, None, 8, 4).unwrap());
    }

    #[test]
    fn histograms_ignore_pixel_order(img in image()) {
        // transposing a square crop visits pixels in another order; the
        // colour histogram only counts values
        let n = img.width.min(img.height);
        let sq = Image::from_fn(n, n, 3, |y, x, c| img.at(y, x, c));
        let tr = Image::from_fn(n, n, 3, |y, x, c| sq.at(x, y, c));
        prop_assert_eq!(color_histogram(&sq, None, 8).unwrap(), color_histogram(&tr, None, 8).unwrap());
    }
}

#[test]
fn quarter_turn_shifts_orientation_columns() {
    // an asymmetric pattern with edges in several directions
    let img = Image::from_fn(9, 9, 3, |y, x, _| if x > 2 && y < 6 { 200.0 } else if x + y > 10 { 90.0 } else { 10.0 });
    let base = edge_histogram(&img, None, 8, 4).unwrap();
    let turned = edge_histogram(&rotate(&img, 90.0), None, 8, 4).unwrap();
    // zero gradients have no orientation and stay in column 0
    let row = |h: &[f64], m: usize| h[m * 8..(m + 1) * 8].iter().sum::<f64>();
    assert_eq!(row(&turned, 0), row(&base, 0));
    for m in 1..4 {
        for o in 0..8 {
            assert_eq!(turned[m * 8 + (o + 2) % 8], base[m * 8 + o], "magnitude {m}, orientation {o}");
        }
    }
    assert!(base[8..].iter().filter(|&&v| v > 0.0).count() >= 3);
}

#[test]
fn color_histogram_width_matches_learned_features() {
    assert_eq!(color_histogram(&Image::filled(3, 3, 3, 0.0), None, 8).unwrap().len(), 512);
}
