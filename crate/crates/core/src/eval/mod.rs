//! Confusion matrices, metrics, ROC curves, threshold selection and the
//! multi-detector comparison.
//!
//! Metrics are micro-averaged: pixel counts are pooled over a whole split
//! before any ratio is taken.

mod compare;
mod confusion;
mod roc;

pub use compare::{
    compare_detectors, gradient_edges, tune_canny, tune_threshold, CompareSettings, ComparisonTable, Detector,
    MetricsReport,
};
pub use confusion::{confusion, metrics, pooled_confusion, ConfusionMatrix, Metrics};
pub use roc::{best_f1_threshold, roc, sweep, threshold_grid, RocCurve, RocPoint};
