//! Threshold metrics, ROC and AP over scored binary sets.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

/// Scores (higher means positive) paired with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(EvalError::Length("scores", "labels"));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(EvalError::Invalid("NaN score".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn counts(&self) -> (usize, usize) {
        let p = self.labels.iter().filter(|&&l| l).count();
        (p, self.labels.len() - p)
    }

    /// `(positives, negatives)` per distinct score, highest score first.
    fn tie_groups(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut last: Option<f64> = None;
        for i in order {
            let s = self.scores[i];
            if last != Some(s) {
                groups.push((0, 0));
                last = Some(s);
            }
            let g = groups.last_mut().unwrap();
            if self.labels[i] {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        groups
    }

    /// Confusion counts when `score > threshold` predicts positive.
    pub fn confusion_at(&self, threshold: f64) -> ConfusionCounts {
        let mut c = ConfusionCounts::default();
        for (&s, &l) in self.scores.iter().zip(&self.labels) {
            match (s > threshold, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// A ratio whose denominator may be zero.
pub type Ratio = Option<f64>;

fn ratio(num: usize, den: usize) -> Ratio {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Sensitivity, specificity and accuracy; `None` marks a zero denominator.
pub fn confusion_metrics(c: ConfusionCounts) -> (Ratio, Ratio, Ratio) {
    (ratio(c.tp, c.tp + c.fn_), ratio(c.tn, c.tn + c.fp), ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn_))
}

/// Mann–Whitney estimate of `P(pos > neg) + P(tie) / 2`.
pub fn auc(s: &ScoredSet) -> Result<f64> {
    let (p, n) = s.counts();
    if p == 0 || n == 0 {
        return Err(EvalError::SingleClass);
    }
    // twice the pair count keeps ties integral
    let mut twice: u128 = 0;
    let mut neg_below: u128 = n as u128;
    for (gp, gn) in s.tie_groups() {
        neg_below -= gn as u128;
        twice += 2 * gp as u128 * neg_below + gp as u128 * gn as u128;
    }
    Ok(twice as f64 / (2 * p as u128 * n as u128) as f64)
}

/// Non-interpolated average precision: `sum_n (R_n - R_{n-1}) P_n` over
/// the descending score thresholds.
pub fn average_precision(s: &ScoredSet) -> Result<f64> {
    let (p, _) = s.counts();
    if p == 0 {
        return Err(EvalError::NoPositives);
    }
    // recall steps are gp / p; dividing once at the end keeps perfect
    // rankings exactly at 1
    let (mut tp, mut fp, mut sum) = (0usize, 0usize, 0.0);
    for (gp, gn) in s.tie_groups() {
        tp += gp;
        fp += gn;
        if gp > 0 {
            sum += gp as f64 * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(sum / p as f64)
}

/// `(fpr, tpr)` after each distinct threshold, from `(0, 0)` to `(1, 1)`.
pub fn roc_points(s: &ScoredSet) -> Result<Vec<(f64, f64)>> {
    let (p, n) = s.counts();
    if p == 0 || n == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0, 0);
    for (gp, gn) in s.tie_groups() {
        tp += gp;
        fp += gn;
        pts.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    Ok(pts)
}

/// Area under a ROC polyline, with the trapezoid rule (which reduces to
/// the tie-averaged step rule for grouped thresholds).
pub fn roc_area(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub se: Ratio,
    pub sp: Ratio,
    pub ac: Ratio,
    pub auc: f64,
    pub ap: f64,
    pub roc: Vec<(f64, f64)>,
}

impl MetricReport {
    /// Threshold metrics use `score > 0`, the sign of the margin.
    pub fn from_scores(s: &ScoredSet) -> Result<Self> {
        let (se, sp, ac) = confusion_metrics(s.confusion_at(0.0));
        Ok(Self { se, sp, ac, auc: auc(s)?, ap: average_precision(s)?, roc: roc_points(s)? })
    }

    pub fn to_csv(&self) -> String {
        let f = |r: Ratio| r.map_or("undefined".to_string(), |v| format!("{v}"));
        format!(
            "metric,value\nse,{}\nsp,{}\nac,{}\nauc,{}\nap,{}\n",
            f(self.se),
            f(self.sp),
            f(self.ac),
            self.auc,
            self.ap
        )
    }

    pub fn roc_csv(&self) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (x, y) in &self.roc {
            let _ = writeln!(s, "{x},{y}");
        }
        s
    }
}
