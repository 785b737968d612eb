//! Ranking metrics, stratified cross-validation with a linear SVM probe,
//! and checkpoint validation.

pub mod error;
pub mod metrics;
pub mod probe;
pub mod validate;

pub use error::{EvalError, Result};
pub use metrics::{
    auc, average_precision, confusion_metrics, roc_area, roc_points, ConfusionCounts, MetricReport, Ratio, ScoredSet,
};
pub use probe::{
    cross_val_scores, cross_validate, fit_linear_probe, sample_weights, stratified_kfold, CvMetrics, Features,
    LinearModel, ProbeConfig,
};
pub use validate::{
    ensemble_scores, extract_in_chunks, list_checkpoints, probe_scores, select_top, validate_checkpoints,
    validate_features, SelectionConfig, ValidationRow, ValidationTable,
};
