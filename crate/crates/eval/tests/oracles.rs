use catwgan_eval::{
    auc, average_precision, cross_validate, fit_linear_probe, roc_area, roc_points, validate_features, Features,
    ProbeConfig, ScoredSet, SelectionConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_auc(s: &[f64], l: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for i in (0..s.len()).filter(|&i| l[i]) {
        for j in (0..s.len()).filter(|&j| !l[j]) {
            pairs += 1.0;
            num += if s[i] > s[j] {
                1.0
            } else if s[i] == s[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    num / pairs
}

fn brute_ap(s: &[f64], l: &[bool]) -> f64 {
    let p = l.iter().filter(|&&v| v).count() as f64;
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let tp = (0..s.len()).filter(|&i| s[i] >= t && l[i]).count() as f64;
        let fp = (0..s.len()).filter(|&i| s[i] >= t && !l[i]).count() as f64;
        let recall = tp / p;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

/// Scores drawn from a small grid so that ties are common.
fn scored_set() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..=50).prop_flat_map(|n| {
        (prop::collection::vec(0u8..12, n), prop::collection::vec(any::<bool>(), n)).prop_map(|(s, mut l)| {
            l[0] = true;
            l[1] = false;
            (s.into_iter().map(|v| v as f64 / 4.0 - 1.0).collect(), l)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_brute_force((s, l) in scored_set()) {
        let set = ScoredSet::new(s.clone(), l.clone()).unwrap();
        let a = auc(&set).unwrap();
        let ap = average_precision(&set).unwrap();
        prop_assert!((a - brute_auc(&s, &l)).abs() <= 1e-12);
        prop_assert!((ap - brute_ap(&s, &l)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&ap));
        let pts = roc_points(&set).unwrap();
        prop_assert_eq!(pts[0], (0.0, 0.0));
        prop_assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        prop_assert!(pts.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        prop_assert!((roc_area(&pts) - a).abs() <= 1e-12);

        // strictly increasing transform
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() + v).collect();
        let moved = ScoredSet::new(t, l.clone()).unwrap();
        prop_assert_eq!(auc(&moved).unwrap(), a);
        prop_assert_eq!(roc_points(&moved).unwrap(), pts);
    }

    #[test]
    fn perfect_ranking_gives_unit_ap(n_pos in 1usize..20, n_neg in 1usize..20) {
        let s: Vec<f64> = (0..n_pos + n_neg).map(|i| -(i as f64)).collect();
        let l: Vec<bool> = (0..n_pos + n_neg).map(|i| i < n_pos).collect();
        let set = ScoredSet::new(s, l).unwrap();
        prop_assert_eq!(average_precision(&set).unwrap(), 1.0);
        // one tie block: AP equals the positive fraction
        let tied = ScoredSet::new(vec![0.0; n_pos + n_neg], set.labels().to_vec()).unwrap();
        let frac = n_pos as f64 / (n_pos + n_neg) as f64;
        prop_assert!((average_precision(&tied).unwrap() - frac).abs() < 1e-12);
    }
}

fn blobs(n: usize, d: usize, sep: f64, seed: u64) -> (Features, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    let data = labels
        .iter()
        .flat_map(|&l| {
            let shift = if l { sep } else { -sep };
            (0..d).map(|j| if j == 0 { shift } else { 0.0 } + rng.random_range(-1.0..1.0)).collect::<Vec<_>>()
        })
        .collect();
    (Features::new(n, d, data).unwrap(), labels)
}

#[test]
fn duplicated_training_set_gives_same_predictions() {
    let (f, l) = blobs(60, 3, 0.7, 1);
    let cfg = ProbeConfig { tolerance: 1e-10, max_epochs: 20000, ..Default::default() };
    let a = fit_linear_probe(&f, &l, &cfg).unwrap();
    let twice = Features::new(120, 3, [f.data.clone(), f.data.clone()].concat()).unwrap();
    let b = fit_linear_probe(&twice, &[l.clone(), l.clone()].concat(), &cfg).unwrap();
    let mut grid = Vec::new();
    for i in -10..=10 {
        for j in -10..=10 {
            grid.push([i as f64 * 0.3, j as f64 * 0.3, 0.1]);
        }
    }
    let mut near = 0;
    for x in &grid {
        let (da, db) = (a.decision(x), b.decision(x));
        if da.abs() > 1e-6 {
            assert_eq!(da > 0.0, db > 0.0, "{x:?}: {da} vs {db}");
        } else {
            near += 1;
        }
    }
    assert!(near < 3);
    for (wa, wb) in a.weights.iter().zip(&b.weights) {
        assert!((wa - wb).abs() < 1e-4, "{wa} vs {wb}");
    }
}

#[test]
fn separable_features_are_fit_exactly() {
    let (f, l) = blobs(90, 4, 3.0, 2);
    let cfg = ProbeConfig { svm_c: 50.0, ..Default::default() };
    let m = fit_linear_probe(&f, &l, &cfg).unwrap();
    let acc = (0..f.rows).filter(|&i| (m.decision(f.row(i)) > 0.0) == l[i]).count();
    assert_eq!(acc, f.rows);
    let cv = cross_validate(&f, &l, &cfg).unwrap();
    assert_eq!(cv.ap, 1.0);
}

#[test]
fn later_checkpoints_that_dominate_are_selected() {
    // separation grows with iteration, so AP rises monotonically
    let iters: Vec<u64> = (0..8).map(|i| 1600 + i * 100).collect();
    let per_iter: Vec<(u64, Features)> = iters
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            let (f, _) = blobs(150, 2, 0.05 + 0.25 * k as f64, 10 + k as u64);
            (g, f)
        })
        .collect();
    let (_, labels) = blobs(150, 2, 0.0, 0);
    let table = validate_features(per_iter, &labels, &ProbeConfig::default(), SelectionConfig::default()).unwrap();
    assert_eq!(table.rows.len(), 8);
    assert!(table.rows.windows(2).all(|w| w[0].ap <= w[1].ap));
    let mut sel = table.selected.clone();
    sel.sort_unstable();
    assert_eq!(sel, iters[3..].to_vec());
    assert!(table.to_csv().starts_with("g_iter,ac,ap,auc\n1600,"));
}
