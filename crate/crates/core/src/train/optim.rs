use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
    Rmsprop,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            "rmsprop" => Ok(Self::Rmsprop),
            other => Err(format!("unknown optimizer {other:?} (expected sgd, adam or rmsprop)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// SGD momentum `mu`.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// RMSprop decay `rho`.
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::Adam, learning_rate: 1e-2, momentum: 0.9, beta1: 0.9, beta2: 0.999, rho: 0.9, epsilon: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("train.optimizer.{name} must be in [0, 1), got {v}")))
            }
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("train.optimizer.learning_rate must be > 0, got {}", self.learning_rate)));
        }
        unit("momentum", self.momentum)?;
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        unit("rho", self.rho)?;
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("train.optimizer.epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-tensor slots mirroring the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    /// Velocity (SGD), first moment (Adam) or unused (RMSprop).
    pub first: Vec<Vec<f64>>,
    /// Second moment (Adam) or squared-gradient average (RMSprop).
    pub second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.param_views().iter().map(|v| vec![0.0; v.values.len()]).collect();
        Self { step: 0, first: zeros.clone(), second: zeros }
    }
}

/// Applies one update and then re-projects constrained parameters.
pub fn optimizer_step<P: Parameters>(params: &mut P, grads: &P, state: &mut OptimizerState, cfg: &OptimizerConfig) -> Result<()> {
    let grad_views = grads.param_views();
    let lens: Vec<usize> = grad_views.iter().map(|v| v.values.len()).collect();
    let slices = params.param_slices_mut();
    if slices.len() != lens.len()
        || state.first.len() != lens.len()
        || slices.iter().zip(&lens).any(|(s, &n)| s.len() != n)
        || state.first.iter().zip(&lens).any(|(s, &n)| s.len() != n)
    {
        return Err(Error::dim("parameter, gradient and optimizer state layouts differ"));
    }
    state.step += 1;
    let t = state.step as f64;
    let lr = cfg.learning_rate;
    for (((p, g), m), v) in slices.into_iter().zip(&grad_views).zip(&mut state.first).zip(&mut state.second) {
        let g = g.values;
        match cfg.kind {
            OptimizerKind::Sgd => {
                for i in 0..p.len() {
                    m[i] = cfg.momentum * m[i] - lr * g[i];
                    p[i] += m[i];
                }
            }
            OptimizerKind::Adam => {
                let c1 = 1.0 - cfg.beta1.powf(t);
                let c2 = 1.0 - cfg.beta2.powf(t);
                for i in 0..p.len() {
                    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.epsilon);
                }
            }
            OptimizerKind::Rmsprop => {
                for i in 0..p.len() {
                    v[i] = cfg.rho * v[i] + (1.0 - cfg.rho) * g[i] * g[i];
                    p[i] -= lr * g[i] / (v[i].sqrt() + cfg.epsilon);
                }
            }
        }
    }
    params.project();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamView;

    #[derive(Debug, Clone)]
    struct Flat(Vec<f64>);

    impl Parameters for Flat {
        fn param_views(&self) -> Vec<ParamView<'_>> {
            vec![ParamView { name: "x".into(), shape: vec![self.0.len()], values: &self.0 }]
        }
        fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    fn cfg(kind: OptimizerKind, lr: f64) -> OptimizerConfig {
        OptimizerConfig { kind, learning_rate: lr, momentum: 0.0, ..Default::default() }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::Rmsprop] {
            let mut p = Flat(vec![0.3, -1.2]);
            let mut st = OptimizerState::new(&p);
            for _ in 0..3 {
                optimizer_step(&mut p, &Flat(vec![0.0, 0.0]), &mut st, &OptimizerConfig { kind, ..Default::default() }).unwrap();
            }
            assert_eq!(p.0, vec![0.3, -1.2]);
            assert_eq!(st.step, 3);
        }
    }

    #[test]
    fn sgd_one_step() {
        let mut p = Flat(vec![1.0]);
        let mut st = OptimizerState::new(&p);
        optimizer_step(&mut p, &Flat(vec![2.0]), &mut st, &cfg(OptimizerKind::Sgd, 0.1)).unwrap();
        assert!((p.0[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut p = Flat(vec![0.0]);
        let mut st = OptimizerState::new(&p);
        let c = OptimizerConfig { momentum: 0.5, ..cfg(OptimizerKind::Sgd, 1.0) };
        optimizer_step(&mut p, &Flat(vec![1.0]), &mut st, &c).unwrap();
        optimizer_step(&mut p, &Flat(vec![1.0]), &mut st, &c).unwrap();
        // v1 = -1, v2 = -1.5
        assert_eq!(p.0[0], -2.5);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = Flat(vec![0.0, 0.0]);
        let mut st = OptimizerState::new(&p);
        optimizer_step(&mut p, &Flat(vec![1.0, -3.0]), &mut st, &cfg(OptimizerKind::Adam, 0.01)).unwrap();
        // m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
        assert!((p.0[0] + 0.01 / (1.0 + 1e-8)).abs() < 1e-17);
        assert!((p.0[1] - 0.01 * 3.0 / (3.0 + 1e-8)).abs() < 1e-17);
    }

    #[test]
    fn rmsprop_first_step() {
        let mut p = Flat(vec![0.0]);
        let mut st = OptimizerState::new(&p);
        optimizer_step(&mut p, &Flat(vec![2.0]), &mut st, &cfg(OptimizerKind::Rmsprop, 0.1)).unwrap();
        let s: f64 = 0.1 * 4.0;
        assert!((p.0[0] + 0.1 * 2.0 / (s.sqrt() + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn layout_mismatch_rejected() {
        let mut p = Flat(vec![0.0]);
        let mut st = OptimizerState::new(&p);
        assert!(optimizer_step(&mut p, &Flat(vec![1.0, 2.0]), &mut st, &OptimizerConfig::default()).is_err());
    }

    #[test]
    fn parse_kind() {
        assert_eq!("rmsprop".parse::<OptimizerKind>(), Ok(OptimizerKind::Rmsprop));
        assert!("adagrad".parse::<OptimizerKind>().is_err());
    }
}
