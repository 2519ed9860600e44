use rayon::prelude::*;
use serde::Serialize;

use crate::classical::{canny, roberts, sobel, CannyParams, GradientField};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::imaging::{EdgeMap, GrayImage, ProbMap};
use crate::nn::{NestedNet, PatchNet, Tensor};

use super::confusion::{metrics, pooled_confusion, Metrics};
use super::roc::{best_f1_threshold, roc, threshold_grid, RocCurve};

/// A detector taking part in a comparison.
#[derive(Debug, Clone, Copy)]
pub enum Detector<'a> {
    Canny,
    Sobel,
    Roberts,
    Cnn(&'a NestedNet),
    PatchCnn(&'a PatchNet),
}

impl Detector<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Detector::Canny => "canny",
            Detector::Sobel => "sobel",
            Detector::Roberts => "roberts",
            Detector::Cnn(_) => "cnn",
            Detector::PatchCnn(_) => "patchcnn",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            Detector::Canny => "Canny",
            Detector::Sobel => "Sobel",
            Detector::Roberts => "Roberts",
            Detector::Cnn(_) => "CNN (nested)",
            Detector::PatchCnn(_) => "CNN (patch)",
        }
    }

    /// Soft response in `[0, 1]` for detectors that have one: normalised
    /// gradient magnitude or network probability. `None` for Canny.
    pub fn response(&self, img: &GrayImage) -> Result<Option<ProbMap>> {
        Ok(Some(match self {
            Detector::Canny => return Ok(None),
            Detector::Sobel => sobel(img)?.normalized(),
            Detector::Roberts => roberts(img)?.normalized(),
            Detector::Cnn(net) => net.predict(&Tensor::from_image(img))?,
            Detector::PatchCnn(net) => net.predict_map(img)?,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(default)]
pub struct CompareSettings {
    /// Chebyshev matching radius; 0 compares pixels in place.
    pub tolerance: usize,
    /// Size of the threshold grid used for tuning and ROC curves.
    pub n_thresholds: usize,
    /// Gaussian widths tried for Canny during tuning.
    pub canny_sigmas: Vec<f64>,
    /// Canny low threshold as a fraction of the high one.
    pub canny_low_ratio: f64,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self { tolerance: 0, n_thresholds: 101, canny_sigmas: vec![1.0], canny_low_ratio: 0.5 }
    }
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub algorithm: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    /// Binarisation threshold chosen on the validation split (Canny: the
    /// high hysteresis fraction).
    pub threshold: f64,
    #[serde(skip)]
    pub roc: Option<RocCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<MetricsReport>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,accuracy,precision,recall,f1,threshold\n");
        for r in &self.rows {
            let m = &r.metrics;
            out.push_str(&format!(
                "{},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                r.algorithm, m.accuracy, m.precision, m.recall, m.f1, r.threshold
            ));
        }
        out
    }

    /// Fixed-width table with metrics in percent.
    pub fn to_text(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.algorithm.len()).max().unwrap_or(0).max("Algorithm".len());
        let mut out = format!(
            "{:<name_w$}  {:>8}  {:>9}  {:>6}  {:>8}\n",
            "Algorithm", "Accuracy", "Precision", "Recall", "F1-score"
        );
        for r in &self.rows {
            let m = &r.metrics;
            out.push_str(&format!(
                "{:<name_w$}  {:>8.2}  {:>9.2}  {:>6.2}  {:>8.2}\n",
                r.algorithm,
                100.0 * m.accuracy,
                100.0 * m.precision,
                100.0 * m.recall,
                100.0 * m.f1
            ));
        }
        out
    }

    pub fn row(&self, algorithm: &str) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.algorithm == algorithm)
    }
}

fn labels(samples: &[Sample]) -> Vec<EdgeMap> {
    samples.iter().map(|s| s.label.clone()).collect()
}

fn responses(det: &Detector<'_>, samples: &[Sample]) -> Result<Vec<ProbMap>> {
    samples
        .par_iter()
        .map(|s| det.response(&s.image).map(|r| r.expect("detector has a soft response")))
        .collect()
}

fn threshold_all(maps: &[ProbMap], t: f64) -> Vec<EdgeMap> {
    maps.iter().map(|m| m.threshold(t)).collect()
}

fn pooled_f1(preds: &[EdgeMap], truths: &[EdgeMap], tolerance: usize) -> Result<f64> {
    Ok(metrics(&pooled_confusion(preds, truths, tolerance)?)?.f1)
}

/// Best-F1 grid threshold for soft responses; ties go to the smaller threshold.
pub fn tune_threshold(maps: &[ProbMap], truths: &[EdgeMap], n_thresholds: usize, tolerance: usize) -> Result<(f64, f64)> {
    if tolerance == 0 {
        return best_f1_threshold(maps, truths, n_thresholds);
    }
    let mut best = (1.0, f64::NEG_INFINITY);
    for t in threshold_grid(n_thresholds)? {
        let f1 = pooled_f1(&threshold_all(maps, t), truths, tolerance)?;
        if f1 >= best.1 {
            best = (t, f1);
        }
    }
    Ok(best)
}

fn run_canny(samples: &[Sample], params: CannyParams) -> Result<Vec<EdgeMap>> {
    samples.par_iter().map(|s| canny(&s.image, params)).collect()
}

/// Canny parameters maximising pooled F1: every configured sigma with every
/// positive grid value as the high threshold.
pub fn tune_canny(samples: &[Sample], settings: &CompareSettings) -> Result<(CannyParams, f64)> {
    let truths = labels(samples);
    let mut best: Option<(CannyParams, f64)> = None;
    for &sigma in &settings.canny_sigmas {
        // ascending highs so ties keep the smaller one
        let mut grid = threshold_grid(settings.n_thresholds)?;
        grid.reverse();
        for high in grid.into_iter().filter(|&h| h > 0.0) {
            let params = CannyParams { sigma, low: high * settings.canny_low_ratio, high };
            let f1 = pooled_f1(&run_canny(samples, params)?, &truths, settings.tolerance)?;
            if best.as_ref().is_none_or(|(_, b)| f1 > *b) {
                best = Some((params, f1));
            }
        }
    }
    best.ok_or_else(|| Error::param("no Canny sigma to tune"))
}

/// Tunes every detector on `val`, then scores it on `test` with pooled pixel
/// counts.
pub fn compare_detectors(
    val: &[Sample],
    test: &[Sample],
    detectors: &[Detector<'_>],
    settings: &CompareSettings,
) -> Result<ComparisonTable> {
    if detectors.is_empty() {
        return Err(Error::param("no detectors to compare"));
    }
    if val.is_empty() || test.is_empty() {
        return Err(Error::Missing("comparison needs nonempty validation and test splits".into()));
    }
    if !(0.0..1.0).contains(&settings.canny_low_ratio) {
        return Err(Error::param("canny_low_ratio must be in [0, 1)"));
    }
    let test_truth = labels(test);
    let mut rows = Vec::with_capacity(detectors.len());
    for det in detectors {
        let row = match det {
            Detector::Canny => {
                let (params, _) = tune_canny(val, settings)?;
                let preds = run_canny(test, params)?;
                MetricsReport {
                    algorithm: det.name().into(),
                    metrics: metrics(&pooled_confusion(&preds, &test_truth, settings.tolerance)?)?,
                    threshold: params.high,
                    roc: None,
                }
            }
            _ => {
                let (t, _) = tune_threshold(&responses(det, val)?, &labels(val), settings.n_thresholds, settings.tolerance)?;
                let maps = responses(det, test)?;
                let preds = threshold_all(&maps, t);
                MetricsReport {
                    algorithm: det.name().into(),
                    metrics: metrics(&pooled_confusion(&preds, &test_truth, settings.tolerance)?)?,
                    threshold: t,
                    roc: Some(roc(&maps, &test_truth, settings.n_thresholds)?),
                }
            }
        };
        rows.push(row);
    }
    Ok(ComparisonTable { rows })
}

/// Binary edges from a gradient field at a fraction of its maximum.
pub fn gradient_edges(g: &GradientField, t: f64) -> EdgeMap {
    g.normalized().threshold(t)
}
