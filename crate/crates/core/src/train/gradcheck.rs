//! Central-difference verification of the hand-written backward passes.

use crate::error::Result;
use crate::imaging::{EdgeMap, ProbMap};
use crate::nn::{BackwardFault, NestedArch, NestedNet, Parameters, PatchArch, PatchNet, Tensor};
use crate::rng::SplitMix64;

use super::init::{init_nested, init_patch};
use super::loss::{bce_loss, total_loss, LossConfig, LossKind};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub epsilon: f64,
    pub tolerance: f64,
    /// Corrupts the nested backward pass; the check is expected to fail.
    pub fault: Option<BackwardFault>,
    pub nested_arch: NestedArch,
    pub patch_arch: PatchArch,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            epsilon: DEFAULT_EPSILON,
            tolerance: DEFAULT_TOLERANCE,
            fault: None,
            nested_arch: NestedArch { widths: vec![2, 3, 4], height: 8, width: 8 },
            patch_arch: PatchArch { conv1_channels: 2, conv2_channels: 3, hidden: 4, dropout_rate: 0.25 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub len: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub model: &'static str,
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.max_rel_error <= self.tolerance)
    }

    pub fn max_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `analytic` against central differences of `loss` for every
/// scalar of every parameter tensor.
pub fn compare_gradients<P: Parameters + Clone>(
    params: &P,
    analytic: &P,
    epsilon: f64,
    loss: impl Fn(&P) -> Result<f64>,
) -> Result<Vec<TensorCheck>> {
    let grads: Vec<Vec<f64>> = analytic.param_views().iter().map(|v| v.values.to_vec()).collect();
    let names: Vec<String> = params.param_views().into_iter().map(|v| v.name).collect();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(names.len());
    for (t, name) in names.into_iter().enumerate() {
        let len = grads[t].len();
        let mut worst: f64 = 0.0;
        for i in 0..len {
            let orig = probe.param_slices_mut()[t][i];
            probe.param_slices_mut()[t][i] = orig + epsilon;
            let plus = loss(&probe)?;
            probe.param_slices_mut()[t][i] = orig - epsilon;
            let minus = loss(&probe)?;
            probe.param_slices_mut()[t][i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(grads[t][i], numeric));
        }
        out.push(TensorCheck { name, len, max_rel_error: worst });
    }
    Ok(out)
}

/// Random tiny nested instance: He-initialised trunk, random heads, biases
/// and fusion weights, random image and label.
pub fn nested_instance(arch: NestedArch, seed: u64) -> Result<(NestedNet, Tensor, EdgeMap, LossConfig)> {
    let mut rng = SplitMix64::new(seed);
    let mut net = init_nested(arch, rng.next_u64())?;
    for stage in &mut net.stages {
        randomize_slice(&mut stage.first.bias, &mut rng, 0.1);
        randomize_slice(&mut stage.second.bias, &mut rng, 0.1);
    }
    for head in &mut net.side_heads {
        randomize_slice(&mut head.weights, &mut rng, 0.5);
        randomize_slice(&mut head.bias, &mut rng, 0.2);
    }
    let raw: Vec<f64> = net.alpha.iter().map(|_| rng.uniform(0.2, 1.0)).collect();
    let sum: f64 = raw.iter().sum();
    net.alpha = raw.iter().map(|a| a / sum).collect();
    let (h, w) = (net.arch.height, net.arch.width);
    let x = Tensor::from_vec(1, h, w, (0..h * w).map(|_| rng.next_f64()).collect())?;
    let label = EdgeMap::new(h, w, (0..h * w).map(|_| rng.bernoulli(0.3) as u8).collect())?;
    let side_weights = (0..net.alpha.len()).map(|_| rng.uniform(0.5, 1.5)).collect();
    Ok((net, x, label, LossConfig { kind: LossKind::Bce, class_balance: true, side_weights }))
}

fn randomize_slice(v: &mut [f64], rng: &mut SplitMix64, scale: f64) {
    v.iter_mut().for_each(|x| *x = rng.uniform(-scale, scale));
}

pub fn check_nested(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let (net, x, label, loss_cfg) = nested_instance(cfg.nested_arch.clone(), cfg.seed)?;
    let trace = net.forward(&x)?;
    let loss = total_loss(&trace, &label, &loss_cfg)?;
    let analytic = net.backward_with_fault(&trace, &loss.d_sides, &loss.d_fused, cfg.fault)?;
    let tensors = compare_gradients(&net, &analytic, cfg.epsilon, |p: &NestedNet| {
        Ok(total_loss(&p.forward_unconstrained(&x)?, &label, &loss_cfg)?.value)
    })?;
    Ok(GradCheckReport { model: "nested", tolerance: cfg.tolerance, tensors })
}

/// The patch check runs in training mode with a fixed dropout mask so the
/// dropout path is covered.
pub fn check_patch(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = SplitMix64::new(cfg.seed ^ 0x5A5A);
    let mut net: PatchNet = init_patch(cfg.patch_arch.clone(), rng.next_u64())?;
    randomize_slice(&mut net.fc2.weights, &mut rng, 0.5);
    for b in [&mut net.conv1.bias, &mut net.conv2.bias, &mut net.fc1.bias, &mut net.fc2.bias] {
        randomize_slice(b, &mut rng, 0.1);
    }
    let x = Tensor::from_vec(1, 28, 28, (0..784).map(|_| rng.next_f64()).collect())?;
    let target = EdgeMap::new(1, 1, vec![1])?;
    let mask_seed = rng.next_u64();
    let loss_of = |p: &PatchNet| -> Result<(f64, f64)> {
        let t = p.forward(&x, true, mask_seed)?;
        let (l, g) = bce_loss(&ProbMap::new(1, 1, vec![t.prob])?, &target, false)?;
        Ok((l, g[0]))
    };
    let trace = net.forward(&x, true, mask_seed)?;
    let (_, d_prob) = loss_of(&net)?;
    let analytic = net.backward(&trace, d_prob);
    let tensors = compare_gradients(&net, &analytic, cfg.epsilon, |p| Ok(loss_of(p)?.0))?;
    Ok(GradCheckReport { model: "patch", tolerance: cfg.tolerance, tensors })
}

/// Both model variants.
pub fn grad_check(cfg: &GradCheckConfig) -> Result<Vec<GradCheckReport>> {
    Ok(vec![check_nested(cfg)?, check_patch(cfg)?])
}
