use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ProbMap;

use super::layers::{
    maxpool2x2, maxpool2x2_backward, relu, relu_backward, sigmoid, upsample_nearest, upsample_nearest_backward,
    ConvLayer, Padding, PoolIndices,
};
use super::params::{project_to_simplex, ParamView, Parameters};
use super::Tensor;

/// Allowed deviation of `sum(alpha)` from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Stage widths and the input size the network is built for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NestedArch {
    pub widths: Vec<usize>,
    pub height: usize,
    pub width: usize,
}

impl Default for NestedArch {
    fn default() -> Self {
        Self { widths: vec![8, 16, 32], height: 64, width: 64 }
    }
}

impl NestedArch {
    pub fn stages(&self) -> usize {
        self.widths.len()
    }

    /// Upsampling factor of side output `s` (0-based): `2^s`.
    pub fn factor(&self, s: usize) -> usize {
        1 << s
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.stages();
        if s == 0 || s > 16 {
            return Err(Error::param(format!("nested net needs 1..=16 stages, got {s}")));
        }
        if self.widths.contains(&0) {
            return Err(Error::param("stage widths must be >= 1"));
        }
        let f = self.factor(s - 1);
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(f) || !self.width.is_multiple_of(f) {
            return Err(Error::param(format!(
                "input {}x{} must be positive and divisible by {f} for {s} stages",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Two 3x3 same-padded convolutions, each followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub first: ConvLayer,
    pub second: ConvLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedNet {
    pub arch: NestedArch,
    pub stages: Vec<Stage>,
    /// 1x1 convolutions from each stage's features to a single logit map.
    pub side_heads: Vec<ConvLayer>,
    /// Fusion weights, kept on the probability simplex.
    pub alpha: Vec<f64>,
}

/// Activations of one stage kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StageTrace {
    pub input: Tensor,
    /// Pooling that produced `input` from the previous stage (absent for stage 0).
    pub pool: Option<PoolIndices>,
    pub first: Tensor,
    pub second: Tensor,
    pub side_logits: Tensor,
}

#[derive(Debug, Clone)]
pub struct NestedTrace {
    pub stages: Vec<StageTrace>,
    pub sides: Vec<ProbMap>,
    pub fused: ProbMap,
}

/// Deliberate backward-pass corruption used to prove that gradient checking
/// catches errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardFault {
    /// Flip the sign of the gradient flowing between the two convolutions of
    /// the first stage.
    FlipFirstStageInnerGradient,
}

/// Side output: 1x1 head, nearest upsampling by `factor`, then sigmoid.
pub fn side_output(feature: &Tensor, head: &ConvLayer, factor: usize) -> Result<ProbMap> {
    side_output_with_logits(feature, head, factor).map(|(_, p)| p)
}

fn side_output_with_logits(feature: &Tensor, head: &ConvLayer, factor: usize) -> Result<(Tensor, ProbMap)> {
    if head.out_channels != 1 || head.kernel_h != 1 || head.kernel_w != 1 {
        return Err(Error::dim("side head must be a 1x1 convolution with one output channel"));
    }
    let logits = head.forward(feature)?;
    let up = upsample_nearest(&logits, factor)?;
    let probs = up.data.iter().map(|&z| sigmoid(z)).collect();
    Ok((logits, ProbMap::new(up.height, up.width, probs)?))
}

fn check_simplex(alpha: &[f64]) -> Result<()> {
    let sum: f64 = alpha.iter().sum();
    if alpha.iter().any(|&a| !(a >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::param(format!("fusion weights {alpha:?} are not on the simplex")));
    }
    Ok(())
}

/// Pixelwise convex combination `sum_i alpha_i * sides_i`.
pub fn fuse_sides(sides: &[ProbMap], alpha: &[f64]) -> Result<ProbMap> {
    if sides.is_empty() || sides.len() != alpha.len() {
        return Err(Error::param(format!("{} side maps but {} fusion weights", sides.len(), alpha.len())));
    }
    check_simplex(alpha)?;
    let dims = sides[0].dims();
    if sides.iter().any(|s| s.dims() != dims) {
        return Err(Error::param("side maps differ in size"));
    }
    let mut fused = vec![0.0; sides[0].len()];
    for (side, &a) in sides.iter().zip(alpha) {
        for (f, &p) in fused.iter_mut().zip(side.data()) {
            *f += a * p;
        }
    }
    // Rounding in a convex combination can only overshoot by a few ulps.
    fused.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    ProbMap::new(dims.0, dims.1, fused)
}

impl NestedNet {
    /// All-zero network with uniform fusion weights.
    pub fn zeros(arch: NestedArch) -> Result<Self> {
        arch.validate()?;
        let mut stages = Vec::new();
        let mut side_heads = Vec::new();
        let mut in_ch = 1;
        for &w in &arch.widths {
            stages.push(Stage {
                first: ConvLayer::zeros(w, in_ch, 3, 3, Padding::SameZero),
                second: ConvLayer::zeros(w, w, 3, 3, Padding::SameZero),
            });
            side_heads.push(ConvLayer::zeros(1, w, 1, 1, Padding::SameZero));
            in_ch = w;
        }
        let s = arch.stages();
        Ok(Self { arch, stages, side_heads, alpha: vec![1.0 / s as f64; s] })
    }

    /// Gradient container with the same layout, all zeros (including alpha).
    pub fn zeros_like(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            stages: self
                .stages
                .iter()
                .map(|s| Stage { first: s.first.zeros_like(), second: s.second.zeros_like() })
                .collect(),
            side_heads: self.side_heads.iter().map(ConvLayer::zeros_like).collect(),
            alpha: vec![0.0; self.alpha.len()],
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<NestedTrace> {
        self.forward_impl(x, true)
    }

    /// Forward pass that fuses with whatever `alpha` holds, on or off the
    /// simplex. Used to differentiate with respect to unconstrained weights.
    pub(crate) fn forward_unconstrained(&self, x: &Tensor) -> Result<NestedTrace> {
        self.forward_impl(x, false)
    }

    fn forward_impl(&self, x: &Tensor, on_simplex: bool) -> Result<NestedTrace> {
        if x.shape() != (1, self.arch.height, self.arch.width) {
            return Err(Error::dim(format!(
                "nested net expects a 1x{}x{} input, got {:?}",
                self.arch.height,
                self.arch.width,
                x.shape()
            )));
        }
        let mut traces: Vec<StageTrace> = Vec::with_capacity(self.stages.len());
        let mut sides = Vec::with_capacity(self.stages.len());
        for (s, (stage, head)) in self.stages.iter().zip(&self.side_heads).enumerate() {
            let (input, pool) = match traces.last() {
                None => (x.clone(), None),
                Some(prev) => {
                    let (pooled, idx) = maxpool2x2(&prev.second);
                    (pooled, Some(idx))
                }
            };
            let mut first = stage.first.forward(&input)?;
            relu(&mut first.data);
            let mut second = stage.second.forward(&first)?;
            relu(&mut second.data);
            let (side_logits, side) = side_output_with_logits(&second, head, self.arch.factor(s))?;
            sides.push(side);
            traces.push(StageTrace { input, pool, first, second, side_logits });
        }
        let fused = if on_simplex {
            fuse_sides(&sides, &self.alpha)?
        } else {
            let mut fused = vec![0.0; sides[0].len()];
            for (side, &a) in sides.iter().zip(&self.alpha) {
                fused.iter_mut().zip(side.data()).for_each(|(f, &p)| *f += a * p);
            }
            ProbMap::new(self.arch.height, self.arch.width, fused)?
        };
        Ok(NestedTrace { stages: traces, sides, fused })
    }

    /// Fused probability map only.
    pub fn predict(&self, x: &Tensor) -> Result<ProbMap> {
        Ok(self.forward(x)?.fused)
    }

    /// Reverse pass given the loss gradients with respect to every side map
    /// (`d_sides[i]`) and the fused map (`d_fused`).
    ///
    /// The returned container holds gradients for every convolution, head and
    /// for `alpha` itself (`dL/dalpha_i = sum_p d_fused(p) * Y_i(p)`, taken on
    /// the unconstrained weights).
    pub fn backward(&self, trace: &NestedTrace, d_sides: &[Vec<f64>], d_fused: &[f64]) -> Result<NestedNet> {
        self.backward_with_fault(trace, d_sides, d_fused, None)
    }

    pub fn backward_with_fault(
        &self,
        trace: &NestedTrace,
        d_sides: &[Vec<f64>],
        d_fused: &[f64],
        fault: Option<BackwardFault>,
    ) -> Result<NestedNet> {
        let s_count = self.stages.len();
        let n = self.arch.height * self.arch.width;
        if trace.stages.len() != s_count || trace.sides.len() != s_count || d_sides.len() != s_count {
            return Err(Error::dim("trace or side gradients do not match the network's stage count"));
        }
        if d_fused.len() != n || d_sides.iter().any(|d| d.len() != n) || trace.fused.len() != n {
            return Err(Error::dim("output gradients do not match the network's input size"));
        }
        let mut grads = self.zeros_like();

        // Gradient reaching each stage's output features from its side head.
        let mut d_features: Vec<Tensor> = Vec::with_capacity(s_count);
        for s in 0..s_count {
            let side = trace.sides[s].data();
            grads.alpha[s] = d_fused.iter().zip(side).map(|(g, p)| g * p).sum();
            let a = self.alpha[s];
            let dz: Vec<f64> = d_sides[s]
                .iter()
                .zip(d_fused)
                .zip(side)
                .map(|((ds, df), p)| (ds + a * df) * p * (1.0 - p))
                .collect();
            let dz = Tensor::from_vec(1, self.arch.height, self.arch.width, dz)?;
            let dz = upsample_nearest_backward(&dz, self.arch.factor(s));
            let st = &trace.stages[s];
            d_features.push(self.side_heads[s].backward(&st.second, &dz, &mut grads.side_heads[s]));
        }

        let mut carry: Option<Tensor> = None;
        for s in (0..s_count).rev() {
            let st = &trace.stages[s];
            let mut d_out = d_features[s].clone();
            if let Some(c) = carry.take() {
                d_out.add_assign(&c);
            }
            relu_backward(&st.second.data, &mut d_out.data);
            let stage = &self.stages[s];
            let mut d_first = stage.second.backward(&st.first, &d_out, &mut grads.stages[s].second);
            if s == 0 && fault == Some(BackwardFault::FlipFirstStageInnerGradient) {
                d_first.data.iter_mut().for_each(|v| *v = -*v);
            }
            relu_backward(&st.first.data, &mut d_first.data);
            let d_input = stage.first.backward(&st.input, &d_first, &mut grads.stages[s].first);
            if let Some(pool) = &st.pool {
                carry = Some(maxpool2x2_backward(&d_input, pool));
            }
        }
        Ok(grads)
    }
}

impl Parameters for NestedNet {
    fn param_views(&self) -> Vec<ParamView<'_>> {
        let mut views = Vec::new();
        for (i, stage) in self.stages.iter().enumerate() {
            for (label, conv) in [("conv1", &stage.first), ("conv2", &stage.second)] {
                views.push(ParamView {
                    name: format!("stage{}.{label}.weight", i + 1),
                    shape: conv.weight_shape(),
                    values: &conv.weights,
                });
                views.push(ParamView {
                    name: format!("stage{}.{label}.bias", i + 1),
                    shape: vec![conv.out_channels],
                    values: &conv.bias,
                });
            }
        }
        for (i, head) in self.side_heads.iter().enumerate() {
            views.push(ParamView { name: format!("side{}.weight", i + 1), shape: head.weight_shape(), values: &head.weights });
            views.push(ParamView { name: format!("side{}.bias", i + 1), shape: vec![1], values: &head.bias });
        }
        views.push(ParamView { name: "alpha".into(), shape: vec![self.alpha.len()], values: &self.alpha });
        views
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for stage in &mut self.stages {
            out.push(&mut stage.first.weights);
            out.push(&mut stage.first.bias);
            out.push(&mut stage.second.weights);
            out.push(&mut stage.second.bias);
        }
        for head in &mut self.side_heads {
            out.push(&mut head.weights);
            out.push(&mut head.bias);
        }
        out.push(&mut self.alpha);
        out
    }

    fn project(&mut self) {
        project_to_simplex(&mut self.alpha);
    }
}
