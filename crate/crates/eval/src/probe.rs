//! Stratified folds and a class-weighted linear SVM probe.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::metrics::{auc, average_precision, confusion_metrics, ScoredSet};

/// Row-major `rows x width` feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub rows: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Features {
    pub fn new(rows: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * width {
            return Err(EvalError::Invalid(format!("{} values do not fill {rows}x{width}", data.len())));
        }
        Ok(Self { rows, width, data })
    }

    pub fn from_tensor<T: catwgan_core::Scalar>(t: &catwgan_core::Tensor<T>) -> Result<Self> {
        let &[rows, width] = t.shape() else {
            return Err(EvalError::Invalid(format!("features must be 2-D, got {:?}", t.shape())));
        };
        Self::new(rows, width, t.data().iter().map(|v| v.to_f64_lossy()).collect())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn select(&self, idx: &[usize]) -> Features {
        let data = idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Features { rows: idx.len(), width: self.width, data }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub k_folds: usize,
    pub svm_c: f64,
    /// `[negative, positive]` per-sample weights; inverse class frequency
    /// when absent.
    pub class_weights: Option<[f64; 2]>,
    pub seed: u64,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { k_folds: 5, svm_c: 1.0, class_weights: None, seed: 0, max_epochs: 2000, tolerance: 1e-7 }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(EvalError::Invalid(format!("k_folds must be at least 2, got {}", self.k_folds)));
        }
        if !(self.svm_c > 0.0) {
            return Err(EvalError::Invalid(format!("svm_c must be positive, got {}", self.svm_c)));
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|&v| !(v > 0.0)) {
                return Err(EvalError::Invalid(format!("class weights must be positive, got {w:?}")));
            }
        }
        Ok(())
    }
}

/// Test folds partition `0..labels.len()`; each class is dealt round-robin
/// over the folds after a seeded shuffle.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(EvalError::Invalid("need at least 2 folds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut offset = 0;
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(EvalError::ClassTooSmall { label: class, have: members.len(), k });
        }
        members.shuffle(&mut rng);
        for (j, i) in members.into_iter().enumerate() {
            tests[(j + offset) % k].push(i);
        }
        offset += labels.iter().filter(|&&l| l == class).count() % k;
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = (0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect();
            (train, test)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn scores(&self, f: &Features) -> Vec<f64> {
        (0..f.rows).map(|i| self.decision(f.row(i))).collect()
    }
}

/// Per-sample weights summing to one within each class pair, so that the
/// objective does not change when the training set is duplicated.
pub fn sample_weights(labels: &[bool], class_weights: Option<[f64; 2]>) -> Result<Vec<f64>> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let [wn, wp] = class_weights.unwrap_or([1.0, 1.0]);
    let total = wn + wp;
    Ok(labels
        .iter()
        .map(|&l| if l { wp / (total * pos as f64) } else { wn / (total * neg as f64) })
        .collect())
}

/// L2-regularized hinge-loss classifier,
/// `min 1/2 |w|^2 + 1/2 b^2 + C sum_i s_i max(0, 1 - y_i (w.x_i + b))`,
/// solved by dual coordinate descent with a deterministic visiting order.
/// `s_i` are [`sample_weights`]: inverse class frequency, normalized.
pub fn fit_linear_probe(features: &Features, labels: &[bool], cfg: &ProbeConfig) -> Result<LinearModel> {
    if features.rows != labels.len() {
        return Err(EvalError::Length("features", "labels"));
    }
    cfg.validate()?;
    let weights = sample_weights(labels, cfg.class_weights)?;
    let n = features.rows;
    let d = features.width;
    let upper: Vec<f64> = weights.iter().map(|s| cfg.svm_c * s).collect();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    // augmented constant feature carries the bias
    let qii: Vec<f64> = (0..n).map(|i| features.row(i).iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut max_violation: f64 = 0.0;
        for &i in &order {
            let x = features.row(i);
            let margin = y[i] * (x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b);
            let g = margin - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == upper[i] {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, upper[i]);
                let step = (alpha[i] - old) * y[i];
                if step != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(x) {
                        *wj += step * xj;
                    }
                    b += step;
                }
            }
        }
        if max_violation < cfg.tolerance {
            break;
        }
    }
    Ok(LinearModel { weights: w, bias: b })
}

/// Mean per-fold metrics of the probe under stratified cross-validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvMetrics {
    pub ac: f64,
    pub ap: f64,
    pub auc: f64,
}

pub fn cross_validate(features: &Features, labels: &[bool], cfg: &ProbeConfig) -> Result<CvMetrics> {
    cfg.validate()?;
    let folds = stratified_kfold(labels, cfg.k_folds, cfg.seed)?;
    let (mut ac, mut ap, mut au) = (0.0, 0.0, 0.0);
    for (train, test) in &folds {
        let tl: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        let model = fit_linear_probe(&features.select(train), &tl, cfg)?;
        let scores = model.scores(&features.select(test));
        let set = ScoredSet::new(scores, test.iter().map(|&i| labels[i]).collect())?;
        ac += confusion_metrics(set.confusion_at(0.0)).2.unwrap_or(0.0);
        ap += average_precision(&set)?;
        au += auc(&set)?;
    }
    let k = folds.len() as f64;
    Ok(CvMetrics { ac: ac / k, ap: ap / k, auc: au / k })
}

/// Out-of-fold decision scores: every item is scored by the probe trained
/// on the folds that exclude it.
pub fn cross_val_scores(features: &Features, labels: &[bool], cfg: &ProbeConfig) -> Result<Vec<f64>> {
    let folds = stratified_kfold(labels, cfg.k_folds, cfg.seed)?;
    let mut out = vec![0.0; labels.len()];
    for (train, test) in &folds {
        let tl: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        let model = fit_linear_probe(&features.select(train), &tl, cfg)?;
        for (&i, s) in test.iter().zip(model.scores(&features.select(test))) {
            out[i] = s;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_counts_follow_strata() {
        let labels: Vec<bool> = (0..200).map(|i| i < 40).collect();
        let folds = stratified_kfold(&labels, 5, 3).unwrap();
        let mut seen = vec![0; 200];
        for (train, test) in &folds {
            assert_eq!(test.iter().filter(|&&i| labels[i]).count(), 8);
            assert_eq!(test.len(), 40);
            assert_eq!(train.len() + test.len(), 200);
            for &i in test {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(folds, stratified_kfold(&labels, 5, 3).unwrap());
        let one_class = vec![true; 6];
        assert!(matches!(stratified_kfold(&one_class, 6, 0), Err(EvalError::ClassTooSmall { .. })));
    }

    #[test]
    fn separable_toy_problem() {
        let pts = [(2.0, 1.0, true), (3.0, 2.5, true), (2.5, -0.5, true), (-1.0, 0.0, false), (-2.0, 1.5, false)];
        let f = Features::new(5, 2, pts.iter().flat_map(|p| [p.0, p.1]).collect()).unwrap();
        let labels: Vec<bool> = pts.iter().map(|p| p.2).collect();
        let cfg = ProbeConfig { svm_c: 100.0, ..Default::default() };
        let m = fit_linear_probe(&f, &labels, &cfg).unwrap();
        for (i, &l) in labels.iter().enumerate() {
            assert_eq!(m.decision(f.row(i)) > 0.0, l);
        }
    }

    #[test]
    fn minority_weight_scales_with_imbalance() {
        let labels: Vec<bool> = (0..50).map(|i| i < 10).collect();
        let w = sample_weights(&labels, None).unwrap();
        assert!((w[0] / w[49] - 4.0).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
