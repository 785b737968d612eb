//! Checkpoint scanning, per-checkpoint probing and ensemble scoring.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use catwgan_core::{Checkpoint, NetworkHandle, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::probe::{cross_validate, fit_linear_probe, Features, ProbeConfig};

/// Top-`m` by AP among checkpoints whose iteration lies within
/// `center ± half_width`; all checkpoints are eligible when none does.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub m: usize,
    pub window_center: u64,
    pub window_half_width: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { m: 5, window_center: 2000, window_half_width: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub g_iter: u64,
    pub ac: f64,
    pub ap: f64,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationTable {
    pub rows: Vec<ValidationRow>,
    /// Iterations of the selected checkpoints, best first.
    pub selected: Vec<u64>,
}

impl ValidationTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("g_iter,ac,ap,auc\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.g_iter, r.ac, r.ap, r.auc);
        }
        s
    }

    pub fn best(&self) -> Option<&ValidationRow> {
        self.rows.iter().max_by(|a, b| a.ap.total_cmp(&b.ap).then(b.g_iter.cmp(&a.g_iter)))
    }

    pub fn row(&self, g_iter: u64) -> Option<&ValidationRow> {
        self.rows.iter().find(|r| r.g_iter == g_iter)
    }
}

pub fn select_top(rows: &[ValidationRow], sel: SelectionConfig) -> Vec<u64> {
    let lo = sel.window_center.saturating_sub(sel.window_half_width);
    let hi = sel.window_center.saturating_add(sel.window_half_width);
    let mut pool: Vec<&ValidationRow> = rows.iter().filter(|r| (lo..=hi).contains(&r.g_iter)).collect();
    if pool.is_empty() {
        pool = rows.iter().collect();
    }
    // ties favour the later checkpoint
    pool.sort_by(|a, b| b.ap.total_cmp(&a.ap).then(b.g_iter.cmp(&a.g_iter)));
    pool.into_iter().take(sel.m).map(|r| r.g_iter).collect()
}

/// Checkpoint directories under `dir` (or `dir` itself, or a run
/// directory's `checkpoints/`), by iteration.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let nested = dir.join("checkpoints");
    if !dir.join(catwgan_core::checkpoint::MANIFEST).exists() && nested.is_dir() {
        return list_checkpoints(&nested);
    }
    let io = |source| EvalError::Io { path: dir.into(), source };
    let mut out = Vec::new();
    if dir.join(catwgan_core::checkpoint::MANIFEST).exists() {
        out.push((Checkpoint::read_manifest(dir)?.iteration, dir.to_path_buf()));
    } else if dir.is_dir() {
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let p = entry.map_err(io)?.path();
            if p.join(catwgan_core::checkpoint::MANIFEST).exists() {
                out.push((Checkpoint::read_manifest(&p)?.iteration, p));
            }
        }
    }
    if out.is_empty() {
        return Err(EvalError::NoCheckpoints(dir.display().to_string()));
    }
    out.sort();
    Ok(out)
}

/// Runs a network's feature layer over `images` in chunks.
pub fn extract_in_chunks(net: &mut NetworkHandle<f32>, images: &Tensor<f32>, chunk: usize) -> Result<Features> {
    let shape = images.shape().to_vec();
    let per: usize = shape[1..].iter().product();
    let mut data = Vec::new();
    let mut width = 0;
    for start in (0..shape[0]).step_by(chunk.max(1)) {
        let end = (start + chunk).min(shape[0]);
        let mut s = shape.clone();
        s[0] = end - start;
        let part = Tensor::new(&s, images.data()[start * per..end * per].to_vec())?;
        let f = if net.spec().features_at.is_some() { net.extract_features(&part)? } else { net.run(&part)? };
        width = f.len() / (end - start);
        data.extend(f.data().iter().map(|&v| v as f64));
    }
    Features::new(shape[0], width, data)
}

/// Probes pre-extracted features for each iteration.
pub fn validate_features(
    per_iter: Vec<(u64, Features)>,
    labels: &[bool],
    probe: &ProbeConfig,
    sel: SelectionConfig,
) -> Result<ValidationTable> {
    let mut rows = Vec::with_capacity(per_iter.len());
    for (g_iter, f) in per_iter {
        let m = cross_validate(&f, labels, probe)?;
        rows.push(ValidationRow { g_iter, ac: m.ac, ap: m.ap, auc: m.auc });
    }
    rows.sort_by_key(|r| r.g_iter);
    let selected = select_top(&rows, sel);
    Ok(ValidationTable { rows, selected })
}

/// Extracts features of `network` from every checkpoint and probes them
/// with stratified cross-validation on the validation set.
pub fn validate_checkpoints(
    dir: &Path,
    network: &str,
    images: &Tensor<f32>,
    labels: &[bool],
    probe: &ProbeConfig,
    sel: SelectionConfig,
) -> Result<ValidationTable> {
    let mut per_iter = Vec::new();
    for (g_iter, path) in list_checkpoints(dir)? {
        let mut net = Checkpoint::load(&path)?.network::<f32>(network)?;
        per_iter.push((g_iter, extract_in_chunks(&mut net, images, 100)?));
    }
    validate_features(per_iter, labels, probe, sel)
}

/// Item-wise mean of per-model decision scores.
pub fn ensemble_scores(per_model: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = per_model.first().ok_or_else(|| EvalError::Invalid("empty ensemble".into()))?;
    if per_model.iter().any(|s| s.len() != first.len()) {
        return Err(EvalError::Length("ensemble member", "ensemble member"));
    }
    let k = per_model.len() as f64;
    Ok((0..first.len()).map(|i| per_model.iter().map(|s| s[i]).sum::<f64>() / k).collect())
}

/// Fits a probe on `train` features and scores `test` features.
pub fn probe_scores(train: &Features, train_labels: &[bool], test: &Features, probe: &ProbeConfig) -> Result<Vec<f64>> {
    Ok(fit_linear_probe(train, train_labels, probe)?.scores(test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(g: u64, ap: f64) -> ValidationRow {
        ValidationRow { g_iter: g, ac: 0.0, ap, auc: 0.0 }
    }

    #[test]
    fn ensemble_examples() {
        let s = vec![0.3, -1.0, 2.0];
        assert_eq!(ensemble_scores(&[s.clone()]).unwrap(), s);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert!(ensemble_scores(&[s.clone(), neg]).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(ensemble_scores(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(), vec![2.0, 3.0]);
        assert!(ensemble_scores(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn selection_window() {
        let rows: Vec<_> = (0..=60).map(|i| row(i * 50, (i as f64 * 0.7).sin())).collect();
        let sel = select_top(&rows, SelectionConfig::default());
        assert_eq!(sel.len(), 5);
        assert!(sel.iter().all(|&g| (1000..=3000).contains(&g)));
        let early: Vec<_> = (0..3).map(|i| row(i * 50, i as f64)).collect();
        assert_eq!(select_top(&early, SelectionConfig::default()), vec![100, 50, 0]);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        assert!(matches!(list_checkpoints(d.path()), Err(EvalError::NoCheckpoints(_))));
    }
}
