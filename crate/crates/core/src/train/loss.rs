use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{EdgeMap, ProbMap};
use crate::nn::NestedTrace;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside the BCE logarithms.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Bce,
    Mse,
}

/// Per-output loss settings shared by every side output and the fused map.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    pub class_balance: bool,
    /// `lambda_i` for each side output.
    pub side_weights: Vec<f64>,
}

fn check_dims(pred: &ProbMap, label: &EdgeMap) -> Result<()> {
    if pred.dims() != label.dims() {
        return Err(Error::dim(format!(
            "prediction {:?} and label {:?} differ in size",
            pred.dims(),
            label.dims()
        )));
    }
    Ok(())
}

/// Class weights `(w_pos, w_neg)`: the opposite class frequencies, or `(1, 1)`
/// when the label is all one class.
pub fn class_weights(label: &EdgeMap) -> (f64, f64) {
    let n = label.len() as f64;
    let pos = label.count() as f64;
    if pos == 0.0 || pos == n {
        (1.0, 1.0)
    } else {
        ((n - pos) / n, pos / n)
    }
}

/// Mean binary cross-entropy and its gradient with respect to `pred`.
///
/// The gradient is that of the clamped loss, so it is 0 where `pred` lies
/// outside the clamp interval.
pub fn bce_loss(pred: &ProbMap, label: &EdgeMap, class_balance: bool) -> Result<(f64, Vec<f64>)> {
    check_dims(pred, label)?;
    let (wp, wn) = if class_balance { class_weights(label) } else { (1.0, 1.0) };
    let n = pred.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.data().iter().zip(label.data()) {
        let inside = (PROB_EPS..=1.0 - PROB_EPS).contains(&p);
        let q = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        let g = if y == 1 {
            total -= wp * q.ln();
            -wp / q
        } else {
            total -= wn * (1.0 - q).ln();
            wn / (1.0 - q)
        };
        grad.push(if inside { g / n } else { 0.0 });
    }
    Ok((total / n, grad))
}

/// Mean squared error and its gradient `2 (p - y) / N`.
pub fn mse_loss(pred: &ProbMap, label: &EdgeMap) -> Result<(f64, Vec<f64>)> {
    check_dims(pred, label)?;
    let n = pred.len() as f64;
    let mut total = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(label.data())
        .map(|(&p, &y)| {
            let d = p - y as f64;
            total += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((total / n, grad))
}

pub fn output_loss(pred: &ProbMap, label: &EdgeMap, kind: LossKind, class_balance: bool) -> Result<(f64, Vec<f64>)> {
    match kind {
        LossKind::Bce => bce_loss(pred, label, class_balance),
        LossKind::Mse => mse_loss(pred, label),
    }
}

/// Value and output gradients of `L = sum_i lambda_i * l(Y_i, Y) + l(Y_fused, Y)`.
#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub value: f64,
    pub side_losses: Vec<f64>,
    pub fused_loss: f64,
    /// `dL/dY_i`, already scaled by `lambda_i`.
    pub d_sides: Vec<Vec<f64>>,
    pub d_fused: Vec<f64>,
}

pub fn total_loss(trace: &NestedTrace, label: &EdgeMap, cfg: &LossConfig) -> Result<TotalLoss> {
    if cfg.side_weights.len() != trace.sides.len() {
        return Err(Error::Config(format!(
            "{} side loss weights given for {} side outputs",
            cfg.side_weights.len(),
            trace.sides.len()
        )));
    }
    let mut value = 0.0;
    let mut side_losses = Vec::with_capacity(trace.sides.len());
    let mut d_sides = Vec::with_capacity(trace.sides.len());
    for (side, &lambda) in trace.sides.iter().zip(&cfg.side_weights) {
        let (l, mut g) = output_loss(side, label, cfg.kind, cfg.class_balance)?;
        value += lambda * l;
        g.iter_mut().for_each(|v| *v *= lambda);
        side_losses.push(l);
        d_sides.push(g);
    }
    let (fused_loss, d_fused) = output_loss(&trace.fused, label, cfg.kind, cfg.class_balance)?;
    value += fused_loss;
    Ok(TotalLoss { value, side_losses, fused_loss, d_sides, d_fused })
}
