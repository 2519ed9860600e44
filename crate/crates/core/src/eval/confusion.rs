use serde::Serialize;

use crate::error::{Error, Result};
use crate::imaging::EdgeMap;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

impl std::ops::AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Pixel confusion counts.
///
/// With `tolerance = 0` every pixel is compared in place. With `r > 0`,
/// predictions are matched one-to-one to truth pixels within Chebyshev
/// distance `r`: coincident pairs first, then the remaining predictions in
/// row-major order each take the first free truth pixel of their window in
/// row-major order. Unmatched predictions are false positives, unmatched
/// truths false negatives, every other pixel a true negative.
pub fn confusion(pred: &EdgeMap, truth: &EdgeMap, tolerance: usize) -> Result<ConfusionMatrix> {
    if pred.dims() != truth.dims() {
        return Err(Error::dim(format!("prediction {:?} vs truth {:?}", pred.dims(), truth.dims())));
    }
    let (p, t) = (pred.data(), truth.data());
    let total = p.len() as u64;
    if tolerance == 0 {
        let mut cm = ConfusionMatrix::default();
        for (&a, &b) in p.iter().zip(t) {
            match (a, b) {
                (1, 1) => cm.tp += 1,
                (1, _) => cm.fp += 1,
                (_, 1) => cm.fn_ += 1,
                _ => cm.tn += 1,
            }
        }
        return Ok(cm);
    }
    let (h, w) = pred.dims();
    let mut truth_free: Vec<bool> = t.iter().map(|&v| v == 1).collect();
    let mut pending = Vec::new();
    let mut tp = 0u64;
    for i in 0..p.len() {
        if p[i] == 1 {
            if truth_free[i] {
                truth_free[i] = false;
                tp += 1;
            } else {
                pending.push(i);
            }
        }
    }
    for i in pending {
        let (r, c) = (i / w, i % w);
        let (r0, r1) = (r.saturating_sub(tolerance), (r + tolerance).min(h - 1));
        let (c0, c1) = (c.saturating_sub(tolerance), (c + tolerance).min(w - 1));
        'window: for rr in r0..=r1 {
            for cc in c0..=c1 {
                let j = rr * w + cc;
                if truth_free[j] {
                    truth_free[j] = false;
                    tp += 1;
                    break 'window;
                }
            }
        }
    }
    let n_pred = pred.count() as u64;
    let n_truth = truth.count() as u64;
    let (fp, fn_) = (n_pred - tp, n_truth - tp);
    Ok(ConfusionMatrix { tp, fp, fn_, tn: total - tp - fp - fn_ })
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, precision, recall and F1; any 0/0 ratio is reported as 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::param("metrics of an empty confusion matrix"));
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(Metrics { accuracy: ratio(cm.tp + cm.tn, total), precision, recall, f1 })
}

/// Pooled counts over aligned prediction/truth sets.
pub fn pooled_confusion(preds: &[EdgeMap], truths: &[EdgeMap], tolerance: usize) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::dim(format!("{} predictions for {} truth maps", preds.len(), truths.len())));
    }
    preds.iter().zip(truths).map(|(p, t)| confusion(p, t, tolerance)).sum()
}
