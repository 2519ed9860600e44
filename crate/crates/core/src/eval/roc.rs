use serde::Serialize;

use crate::error::{Error, Result};
use crate::imaging::{EdgeMap, ProbMap};

use super::confusion::{metrics, ConfusionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,tpr,fpr\n");
        for p in &self.points {
            out.push_str(&format!("{:.4},{:.4},{:.4}\n", p.threshold, p.tpr, p.fpr));
        }
        out
    }

    /// Trapezoidal area under the curve.
    pub fn auc(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
    }
}

/// `n` equally spaced thresholds from 1 down to 0.
pub fn threshold_grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::param(format!("need at least 2 thresholds, got {n}")));
    }
    let last = (n - 1) as f64;
    Ok((0..n).map(|k| 1.0 - k as f64 / last).collect())
}

/// Pooled confusion counts at every grid threshold (pixel positive iff
/// `p >= threshold`), in grid order.
pub fn sweep(probs: &[ProbMap], truths: &[EdgeMap], thresholds: &[f64]) -> Result<Vec<ConfusionMatrix>> {
    if probs.len() != truths.len() {
        return Err(Error::dim(format!("{} probability maps for {} truth maps", probs.len(), truths.len())));
    }
    let n = thresholds.len();
    // hist[k]: pixels whose first accepting threshold is thresholds[k].
    let mut pos_hist = vec![0u64; n + 1];
    let mut neg_hist = vec![0u64; n + 1];
    for (p, t) in probs.iter().zip(truths) {
        if p.dims() != t.dims() {
            return Err(Error::dim(format!("probability map {:?} vs truth {:?}", p.dims(), t.dims())));
        }
        for (&v, &y) in p.data().iter().zip(t.data()) {
            let k = thresholds.partition_point(|&th| v < th);
            if y == 1 {
                pos_hist[k] += 1;
            } else {
                neg_hist[k] += 1;
            }
        }
    }
    let positives: u64 = pos_hist.iter().sum();
    let negatives: u64 = neg_hist.iter().sum();
    let (mut tp, mut fp) = (0u64, 0u64);
    Ok((0..n)
        .map(|k| {
            tp += pos_hist[k];
            fp += neg_hist[k];
            ConfusionMatrix { tp, fp, fn_: positives - tp, tn: negatives - fp }
        })
        .collect())
}

pub fn roc(probs: &[ProbMap], truths: &[EdgeMap], n_thresholds: usize) -> Result<RocCurve> {
    let grid = threshold_grid(n_thresholds)?;
    let counts = sweep(probs, truths, &grid)?;
    let rate = |a: u64, b: u64| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    Ok(RocCurve {
        points: grid
            .iter()
            .zip(&counts)
            .map(|(&threshold, cm)| RocPoint { threshold, tpr: rate(cm.tp, cm.fn_), fpr: rate(cm.fp, cm.tn) })
            .collect(),
    })
}

/// Grid threshold with the highest pooled F1; ties go to the smaller threshold.
pub fn best_f1_threshold(probs: &[ProbMap], truths: &[EdgeMap], n_thresholds: usize) -> Result<(f64, f64)> {
    let grid = threshold_grid(n_thresholds)?;
    let counts = sweep(probs, truths, &grid)?;
    let mut best = (grid[0], f64::NEG_INFINITY);
    for (&t, cm) in grid.iter().zip(&counts) {
        let f1 = if cm.total() == 0 { 0.0 } else { metrics(cm)?.f1 };
        if f1 >= best.1 {
            best = (t, f1);
        }
    }
    Ok(best)
}
