use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{GrayImage, ProbMap};

use super::layers::{
    dropout_mask, maxpool2x2, maxpool2x2_backward, relu, relu_backward, sigmoid, ConvLayer, Dense, Padding,
    PoolIndices,
};
use super::params::{ParamView, Parameters};
use super::Tensor;

/// Side length of the square input patch.
pub const PATCH_SIZE: usize = 28;
const KERNEL: usize = 5;
/// Spatial size after conv-pool-conv-pool: 28 -> 24 -> 12 -> 8 -> 4.
const FINAL_SIDE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchArch {
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
}

impl Default for PatchArch {
    fn default() -> Self {
        Self { conv1_channels: 6, conv2_channels: 16, hidden: 64, dropout_rate: 0.5 }
    }
}

impl PatchArch {
    pub fn validate(&self) -> Result<()> {
        if self.conv1_channels == 0 || self.conv2_channels == 0 || self.hidden == 0 {
            return Err(Error::param("patch net layer widths must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::param(format!("dropout rate must be in [0, 1), got {}", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn flat_len(&self) -> usize {
        self.conv2_channels * FINAL_SIDE * FINAL_SIDE
    }
}

/// Conv(5x5, valid) - ReLU - pool - Conv(5x5, valid) - ReLU - pool - FC - ReLU
/// - dropout - FC - sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchNet {
    pub arch: PatchArch,
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub fc1: Dense,
    pub fc2: Dense,
}

#[derive(Debug, Clone)]
pub struct PatchTrace {
    pub input: Tensor,
    pub conv1: Tensor,
    pub pool1: PoolIndices,
    pub pooled1: Tensor,
    pub conv2: Tensor,
    pub pool2: PoolIndices,
    pub flat: Vec<f64>,
    /// FC1 activations after ReLU, before dropout.
    pub hidden: Vec<f64>,
    pub mask: Vec<f64>,
    pub dropped: Vec<f64>,
    pub logit: f64,
    pub prob: f64,
}

/// `PATCH_SIZE x PATCH_SIZE` window whose centre cell (offset 14) is `(row, col)`;
/// samples outside the image replicate the nearest border pixel.
pub fn extract_patch(img: &GrayImage, row: usize, col: usize) -> Result<Tensor> {
    let (h, w) = img.dims();
    if row >= h || col >= w {
        return Err(Error::dim(format!("patch centre ({row}, {col}) outside a {h}x{w} image")));
    }
    let half = (PATCH_SIZE / 2) as i64;
    let mut data = Vec::with_capacity(PATCH_SIZE * PATCH_SIZE);
    for dy in 0..PATCH_SIZE as i64 {
        let r = (row as i64 + dy - half).clamp(0, h as i64 - 1) as usize;
        for dx in 0..PATCH_SIZE as i64 {
            let c = (col as i64 + dx - half).clamp(0, w as i64 - 1) as usize;
            data.push(img.get(r, c));
        }
    }
    Tensor::from_vec(1, PATCH_SIZE, PATCH_SIZE, data)
}

impl PatchNet {
    pub fn zeros(arch: PatchArch) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            conv1: ConvLayer::zeros(arch.conv1_channels, 1, KERNEL, KERNEL, Padding::Valid),
            conv2: ConvLayer::zeros(arch.conv2_channels, arch.conv1_channels, KERNEL, KERNEL, Padding::Valid),
            fc1: Dense::zeros(arch.flat_len(), arch.hidden),
            fc2: Dense::zeros(arch.hidden, 1),
            arch,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            conv1: self.conv1.zeros_like(),
            conv2: self.conv2.zeros_like(),
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
        }
    }

    /// Edge probability of the patch centre. Dropout is active only in
    /// `train_mode`, with its mask drawn from `seed`.
    pub fn forward(&self, patch: &Tensor, train_mode: bool, seed: u64) -> Result<PatchTrace> {
        if patch.shape() != (1, PATCH_SIZE, PATCH_SIZE) {
            return Err(Error::dim(format!("patch net expects a 1x28x28 input, got {:?}", patch.shape())));
        }
        let mut conv1 = self.conv1.forward(patch)?;
        relu(&mut conv1.data);
        let (pooled1, pool1) = maxpool2x2(&conv1);
        let mut conv2 = self.conv2.forward(&pooled1)?;
        relu(&mut conv2.data);
        let (pooled2, pool2) = maxpool2x2(&conv2);
        let flat = pooled2.data;
        let mut hidden = self.fc1.forward(&flat)?;
        relu(&mut hidden);
        let mask = if train_mode {
            dropout_mask(hidden.len(), self.arch.dropout_rate, seed)
        } else {
            vec![1.0; hidden.len()]
        };
        let dropped: Vec<f64> = hidden.iter().zip(&mask).map(|(h, m)| h * m).collect();
        let logit = self.fc2.forward(&dropped)?[0];
        Ok(PatchTrace {
            input: patch.clone(),
            conv1,
            pool1,
            pooled1,
            conv2,
            pool2,
            flat,
            hidden,
            mask,
            dropped,
            logit,
            prob: sigmoid(logit),
        })
    }

    pub fn predict(&self, patch: &Tensor) -> Result<f64> {
        Ok(self.forward(patch, false, 0)?.prob)
    }

    /// Gradients of a loss whose derivative with respect to the output
    /// probability is `d_prob`.
    pub fn backward(&self, trace: &PatchTrace, d_prob: f64) -> PatchNet {
        let mut grads = self.zeros_like();
        let d_logit = d_prob * trace.prob * (1.0 - trace.prob);
        let d_dropped = self.fc2.backward(&trace.dropped, &[d_logit], &mut grads.fc2);
        let mut d_hidden: Vec<f64> = d_dropped.iter().zip(&trace.mask).map(|(d, m)| d * m).collect();
        relu_backward(&trace.hidden, &mut d_hidden);
        let d_flat = self.fc1.backward(&trace.flat, &d_hidden, &mut grads.fc1);
        let (_, ph, pw) = (self.arch.conv2_channels, FINAL_SIDE, FINAL_SIDE);
        let d_pooled2 = Tensor::from_vec(self.arch.conv2_channels, ph, pw, d_flat).expect("flat length matches arch");
        let mut d_conv2 = maxpool2x2_backward(&d_pooled2, &trace.pool2);
        relu_backward(&trace.conv2.data, &mut d_conv2.data);
        let d_pooled1 = self.conv2.backward(&trace.pooled1, &d_conv2, &mut grads.conv2);
        let mut d_conv1 = maxpool2x2_backward(&d_pooled1, &trace.pool1);
        relu_backward(&trace.conv1.data, &mut d_conv1.data);
        self.conv1.backward(&trace.input, &d_conv1, &mut grads.conv1);
        grads
    }

    /// Dense probability map by sliding the classifier over every pixel.
    pub fn predict_map(&self, img: &GrayImage) -> Result<ProbMap> {
        let (h, w) = img.dims();
        let rows: Vec<Vec<f64>> = (0..h)
            .into_par_iter()
            .map(|r| (0..w).map(|c| self.predict(&extract_patch(img, r, c)?)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        ProbMap::new(h, w, rows.concat())
    }
}

impl Parameters for PatchNet {
    fn param_views(&self) -> Vec<ParamView<'_>> {
        let mut views = Vec::with_capacity(8);
        for (name, conv) in [("conv1", &self.conv1), ("conv2", &self.conv2)] {
            views.push(ParamView { name: format!("{name}.weight"), shape: conv.weight_shape(), values: &conv.weights });
            views.push(ParamView { name: format!("{name}.bias"), shape: vec![conv.out_channels], values: &conv.bias });
        }
        for (name, fc) in [("fc1", &self.fc1), ("fc2", &self.fc2)] {
            views.push(ParamView { name: format!("{name}.weight"), shape: vec![fc.outputs, fc.inputs], values: &fc.weights });
            views.push(ParamView { name: format!("{name}.bias"), shape: vec![fc.outputs], values: &fc.bias });
        }
        views
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.conv1.weights,
            &mut self.conv1.bias,
            &mut self.conv2.weights,
            &mut self.conv2.bias,
            &mut self.fc1.weights,
            &mut self.fc1.bias,
            &mut self.fc2.weights,
            &mut self.fc2.bias,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_net(seed: u64) -> PatchNet {
        let mut net = PatchNet::zeros(PatchArch { conv1_channels: 2, conv2_channels: 3, hidden: 5, dropout_rate: 0.5 }).unwrap();
        let mut rng = SplitMix64::new(seed);
        for s in net.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = rng.uniform(-0.5, 0.5));
        }
        net
    }

    fn random_patch(seed: u64) -> Tensor {
        let mut rng = SplitMix64::new(seed);
        Tensor::from_vec(1, 28, 28, (0..784).map(|_| rng.next_f64()).collect()).unwrap()
    }

    #[test]
    fn zero_weights_give_half() {
        let net = PatchNet::zeros(PatchArch::default()).unwrap();
        assert_eq!(net.predict(&random_patch(1)).unwrap(), 0.5);
    }

    #[test]
    fn shape_chain() {
        let net = PatchNet::zeros(PatchArch::default()).unwrap();
        let t = net.forward(&random_patch(2), false, 0).unwrap();
        assert_eq!(t.conv1.shape(), (6, 24, 24));
        assert_eq!(t.pooled1.shape(), (6, 12, 12));
        assert_eq!(t.conv2.shape(), (16, 8, 8));
        assert_eq!(t.flat.len(), 16 * 4 * 4);
        assert_eq!(t.hidden.len(), 64);
    }

    #[test]
    fn inference_is_deterministic_and_dropout_free() {
        let net = random_net(3);
        let p = random_patch(4);
        let a = net.forward(&p, false, 1).unwrap();
        let b = net.forward(&p, false, 99).unwrap();
        assert_eq!(a.prob.to_bits(), b.prob.to_bits());
        assert!(a.mask.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn wrong_patch_size_rejected() {
        let net = random_net(3);
        assert!(net.forward(&Tensor::zeros(1, 27, 28), false, 0).is_err());
        assert!(net.forward(&Tensor::zeros(2, 28, 28), false, 0).is_err());
    }

    #[test]
    fn patch_extraction_replicates_border() {
        let img = GrayImage::from_fn(5, 6, |r, c| (r * 6 + c) as f64 / 30.0);
        let p = extract_patch(&img, 2, 3).unwrap();
        assert_eq!(p.at(0, 14, 14), img.get(2, 3));
        assert_eq!(p.at(0, 0, 0), img.get(0, 0));
        assert_eq!(p.at(0, 27, 27), img.get(4, 5));
        assert_eq!(p.at(0, 15, 13), img.get(3, 2));
        assert!(extract_patch(&img, 5, 0).is_err());
    }

    #[test]
    fn dropout_scales_surviving_units() {
        let net = random_net(5);
        let t = net.forward(&random_patch(6), true, 11).unwrap();
        for ((h, m), d) in t.hidden.iter().zip(&t.mask).zip(&t.dropped) {
            assert!(*m == 0.0 || *m == 2.0);
            assert_eq!(*d, h * m);
        }
    }
}
