use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// Zero padding of `k / 2` on every side; output keeps the input size.
    SameZero,
    /// No padding; output shrinks by `k - 1`.
    Valid,
}

/// Stride-1 2-D convolution (cross-correlation) with per-channel bias.
/// Weights are laid out `(out_ch, in_ch, kh, kw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub padding: Padding,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Column range `[lo, hi)` of output positions whose input column
/// `o + k - pad` lies inside `[0, w)`.
#[inline]
fn valid_span(k: usize, pad: usize, w: usize, out_w: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k);
    let hi = (w + pad).saturating_sub(k).min(out_w);
    (lo, hi.max(lo))
}

impl ConvLayer {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel_h: usize, kernel_w: usize, padding: Padding) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            padding,
            weights: vec![0.0; out_channels * in_channels * kernel_h * kernel_w],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.out_channels, self.in_channels, self.kernel_h, self.kernel_w, self.padding)
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_channels, self.in_channels, self.kernel_h, self.kernel_w]
    }

    #[inline]
    fn w_index(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> usize {
        ((oc * self.in_channels + ic) * self.kernel_h + ky) * self.kernel_w + kx
    }

    fn pads(&self) -> (usize, usize) {
        match self.padding {
            Padding::SameZero => (self.kernel_h / 2, self.kernel_w / 2),
            Padding::Valid => (0, 0),
        }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        match self.padding {
            Padding::SameZero => Ok((h, w)),
            Padding::Valid => {
                if self.kernel_h > h || self.kernel_w > w {
                    Err(Error::dim(format!(
                        "{}x{} valid convolution does not fit a {h}x{w} input",
                        self.kernel_h, self.kernel_w
                    )))
                } else {
                    Ok((h - self.kernel_h + 1, w - self.kernel_w + 1))
                }
            }
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        if x.channels != self.in_channels {
            return Err(Error::dim(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels, x.channels
            )));
        }
        self.output_dims(x.height, x.width)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (oh, ow) = self.check_input(x)?;
        let (ph, pw) = self.pads();
        let (h, w) = (x.height, x.width);
        let mut out = Tensor::zeros(self.out_channels, oh, ow);
        for oc in 0..self.out_channels {
            let dst = out.channel_mut(oc);
            dst.iter_mut().for_each(|v| *v = self.bias[oc]);
            for ic in 0..self.in_channels {
                let src = x.channel(ic);
                for ky in 0..self.kernel_h {
                    for kx in 0..self.kernel_w {
                        let wv = self.weights[self.w_index(oc, ic, ky, kx)];
                        if wv == 0.0 {
                            continue;
                        }
                        let (lo, hi) = valid_span(kx, pw, w, ow);
                        for oy in 0..oh {
                            let iy = oy + ky;
                            if iy < ph || iy - ph >= h {
                                continue;
                            }
                            let row = (iy - ph) * w;
                            let d = &mut dst[oy * ow + lo..oy * ow + hi];
                            let s = &src[row + lo + kx - pw..row + hi + kx - pw];
                            for (a, b) in d.iter_mut().zip(s) {
                                *a += wv * b;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Accumulates `dL/dW`, `dL/db` into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Tensor, dy: &Tensor, grad: &mut ConvLayer) -> Tensor {
        let (oh, ow) = (dy.height, dy.width);
        let (ph, pw) = self.pads();
        let (h, w) = (x.height, x.width);
        let mut dx = Tensor::zeros(self.in_channels, h, w);
        for oc in 0..self.out_channels {
            let g = dy.channel(oc);
            grad.bias[oc] += g.iter().sum::<f64>();
            for ic in 0..self.in_channels {
                let src = x.channel(ic);
                for ky in 0..self.kernel_h {
                    for kx in 0..self.kernel_w {
                        let wi = self.w_index(oc, ic, ky, kx);
                        let wv = self.weights[wi];
                        let (lo, hi) = valid_span(kx, pw, w, ow);
                        let mut acc = 0.0;
                        let dxc = dx.channel_mut(ic);
                        for oy in 0..oh {
                            let iy = oy + ky;
                            if iy < ph || iy - ph >= h {
                                continue;
                            }
                            let row = (iy - ph) * w;
                            let gs = &g[oy * ow + lo..oy * ow + hi];
                            let xs = &src[row + lo + kx - pw..row + hi + kx - pw];
                            acc += gs.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                            let ds = &mut dxc[row + lo + kx - pw..row + hi + kx - pw];
                            for (d, &gv) in ds.iter_mut().zip(gs) {
                                *d += wv * gv;
                            }
                        }
                        grad.weights[wi] += acc;
                    }
                }
            }
        }
        dx
    }
}

/// Fully connected layer; weights are `(out, in)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs, self.outputs)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(Error::dim(format!("dense layer expects {} inputs, got {}", self.inputs, x.len())));
        }
        Ok((0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect())
    }

    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}

pub fn relu(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `dy` in place by the ReLU output (`> 0`).
pub fn relu_backward(activated: &[f64], dy: &mut [f64]) {
    for (d, &a) in dy.iter_mut().zip(activated) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Flat input index of the maximum of every pooling window.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    pub input_shape: (usize, usize, usize),
    pub argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2. Odd inputs are padded on the right/bottom
/// by replicating the last column/row; ties go to the first window position
/// in row-major order.
pub fn maxpool2x2(x: &Tensor) -> (Tensor, PoolIndices) {
    let (c, h, w) = x.shape();
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::zeros(c, oh, ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = usize::MAX;
                let mut best = f64::NEG_INFINITY;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let iy = (2 * oy + dy).min(h - 1);
                    let ix = (2 * ox + dx).min(w - 1);
                    let idx = base + iy * w + ix;
                    if x.data[idx] > best {
                        best = x.data[idx];
                        best_idx = idx;
                    }
                }
                out.data[(ch * oh + oy) * ow + ox] = best;
                argmax.push(best_idx);
            }
        }
    }
    (out, PoolIndices { input_shape: (c, h, w), argmax })
}

pub fn maxpool2x2_backward(dy: &Tensor, idx: &PoolIndices) -> Tensor {
    let (c, h, w) = idx.input_shape;
    let mut dx = Tensor::zeros(c, h, w);
    for (&i, &g) in idx.argmax.iter().zip(&dy.data) {
        dx.data[i] += g;
    }
    dx
}

pub fn upsample_nearest(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::param("upsampling factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let (c, h, w) = x.shape();
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Tensor::zeros(c, oh, ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                out.data[(ch * oh + oy) * ow + ox] = x.data[(ch * h + oy / factor) * w + ox / factor];
            }
        }
    }
    Ok(out)
}

/// Sums the gradient over each `factor x factor` replication block.
pub fn upsample_nearest_backward(dy: &Tensor, factor: usize) -> Tensor {
    if factor == 1 {
        return dy.clone();
    }
    let (c, oh, ow) = dy.shape();
    let (h, w) = (oh / factor, ow / factor);
    let mut dx = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                dx.data[(ch * h + oy / factor) * w + ox / factor] += dy.data[(ch * oh + oy) * ow + ox];
            }
        }
    }
    dx
}

/// Inverted-dropout multipliers: each unit is kept with probability
/// `1 - rate` and scaled by `1 / (1 - rate)`.
pub fn dropout_mask(n: usize, rate: f64, seed: u64) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 / (1.0 - rate);
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|_| if rng.next_f64() < rate { 0.0 } else { keep }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tensor(rng: &mut SplitMix64, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    fn random_conv(rng: &mut SplitMix64, oc: usize, ic: usize, k: usize, padding: Padding) -> ConvLayer {
        let mut layer = ConvLayer::zeros(oc, ic, k, k, padding);
        layer.weights.iter_mut().for_each(|v| *v = rng.uniform(-1.0, 1.0));
        layer.bias.iter_mut().for_each(|v| *v = rng.uniform(-1.0, 1.0));
        layer
    }

    /// Straight six-loop reference convolution.
    fn naive_conv(layer: &ConvLayer, x: &Tensor) -> Tensor {
        let (ph, pw) = match layer.padding {
            Padding::SameZero => (layer.kernel_h / 2, layer.kernel_w / 2),
            Padding::Valid => (0, 0),
        };
        let (oh, ow) = layer.output_dims(x.height, x.width).unwrap();
        let mut out = Tensor::zeros(layer.out_channels, oh, ow);
        for oc in 0..layer.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = layer.bias[oc];
                    for ic in 0..layer.in_channels {
                        for ky in 0..layer.kernel_h {
                            for kx in 0..layer.kernel_w {
                                let iy = oy as i64 + ky as i64 - ph as i64;
                                let ix = ox as i64 + kx as i64 - pw as i64;
                                if iy < 0 || ix < 0 || iy >= x.height as i64 || ix >= x.width as i64 {
                                    continue;
                                }
                                s += layer.weights[layer.w_index(oc, ic, ky, kx)] * x.at(ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    out.data[(oc * oh + oy) * ow + ox] = s;
                }
            }
        }
        out
    }

    #[test]
    fn one_by_one_identity() {
        let mut rng = SplitMix64::new(1);
        let x = random_tensor(&mut rng, 1, 4, 5);
        let mut layer = ConvLayer::zeros(1, 1, 1, 1, Padding::SameZero);
        layer.weights[0] = 1.0;
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn impulse_reproduces_flipped_kernel_footprint() {
        let mut x = Tensor::zeros(1, 5, 5);
        x.data[12] = 1.0;
        let mut layer = ConvLayer::zeros(1, 1, 3, 3, Padding::SameZero);
        layer.weights = (1..=9).map(f64::from).collect();
        let y = layer.forward(&x).unwrap();
        // output(p + u) accumulates k(c - u): offset (-1,-1) from the impulse sees k(2,2).
        assert_eq!(y.at(0, 1, 1), 9.0);
        assert_eq!(y.at(0, 2, 2), 5.0);
        assert_eq!(y.at(0, 3, 3), 1.0);
        assert_eq!(y.at(0, 1, 3), 7.0);
    }

    #[test]
    fn forward_matches_naive() {
        let mut rng = SplitMix64::new(2);
        for trial in 0..60 {
            let padding = if trial % 2 == 0 { Padding::SameZero } else { Padding::Valid };
            let k = [1, 3, 5][trial % 3];
            let (h, w) = (5 + rng.index(5), 5 + rng.index(5));
            let (oc, ic) = (1 + rng.index(3), 1 + rng.index(3));
            let layer = random_conv(&mut rng, oc, ic, k, padding);
            let x = random_tensor(&mut rng, layer.in_channels, h, w);
            let got = layer.forward(&x).unwrap();
            let want = naive_conv(&layer, &x);
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn shape_errors() {
        let layer = ConvLayer::zeros(2, 3, 5, 5, Padding::Valid);
        assert!(layer.forward(&Tensor::zeros(2, 8, 8)).is_err());
        assert!(layer.forward(&Tensor::zeros(3, 4, 8)).is_err());
        assert!(Dense::zeros(3, 2).forward(&[1.0, 2.0]).is_err());
    }

    fn conv_loss(layer: &ConvLayer, x: &Tensor, probe: &Tensor) -> f64 {
        layer.forward(x).unwrap().data.iter().zip(&probe.data).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SplitMix64::new(3);
        let eps = 1e-5;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        for padding in [Padding::SameZero, Padding::Valid] {
            let layer = random_conv(&mut rng, 2, 3, 3, padding);
            let x = random_tensor(&mut rng, 3, 6, 5);
            let (oh, ow) = layer.output_dims(6, 5).unwrap();
            let probe = random_tensor(&mut rng, 2, oh, ow);
            let mut grad = layer.zeros_like();
            let dx = layer.backward(&x, &probe, &mut grad);

            for i in 0..x.data.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp.data[i] += eps;
                xm.data[i] -= eps;
                let num = (conv_loss(&layer, &xp, &probe) - conv_loss(&layer, &xm, &probe)) / (2.0 * eps);
                assert!(rel(dx.data[i], num) < 1e-6);
            }
            for i in 0..layer.weights.len() {
                let (mut lp, mut lm) = (layer.clone(), layer.clone());
                lp.weights[i] += eps;
                lm.weights[i] -= eps;
                let num = (conv_loss(&lp, &x, &probe) - conv_loss(&lm, &x, &probe)) / (2.0 * eps);
                assert!(rel(grad.weights[i], num) < 1e-6);
            }
            for i in 0..layer.bias.len() {
                let (mut lp, mut lm) = (layer.clone(), layer.clone());
                lp.bias[i] += eps;
                lm.bias[i] -= eps;
                let num = (conv_loss(&lp, &x, &probe) - conv_loss(&lm, &x, &probe)) / (2.0 * eps);
                assert!(rel(grad.bias[i], num) < 1e-6);
            }
        }
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = SplitMix64::new(8);
        let mut layer = Dense::zeros(5, 3);
        layer.weights.iter_mut().for_each(|v| *v = rng.uniform(-1.0, 1.0));
        let x: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let probe = [0.3, -1.2, 0.7];
        let loss = |l: &Dense, x: &[f64]| l.forward(x).unwrap().iter().zip(probe).map(|(a, b)| a * b).sum::<f64>();
        let mut grad = layer.zeros_like();
        let dx = layer.backward(&x, &probe, &mut grad);
        let eps = 1e-5;
        for i in 0..5 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += eps;
            xm[i] -= eps;
            assert!((dx[i] - (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * eps)).abs() < 1e-8);
        }
        for i in 0..15 {
            let (mut lp, mut lm) = (layer.clone(), layer.clone());
            lp.weights[i] += eps;
            lm.weights[i] -= eps;
            assert!((grad.weights[i] - (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * eps)).abs() < 1e-8);
        }
    }

    #[test]
    fn pool_basics() {
        let x = Tensor::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = maxpool2x2(&x);
        assert_eq!(y.data, vec![4.0]);
        assert_eq!(idx.argmax, vec![3]);
        let (y, idx) = maxpool2x2(&Tensor::from_vec(1, 2, 2, vec![7.0; 4]).unwrap());
        assert_eq!((y.data[0], idx.argmax[0]), (7.0, 0));
        // Odd input: last column replicated.
        let x = Tensor::from_vec(1, 1, 3, vec![1.0, 0.0, 5.0]).unwrap();
        let (y, idx) = maxpool2x2(&x);
        assert_eq!(y.data, vec![1.0, 5.0]);
        assert_eq!(idx.argmax, vec![0, 2]);
    }

    #[test]
    fn pool_matches_window_scan() {
        let mut rng = SplitMix64::new(21);
        for _ in 0..200 {
            let x = random_tensor(&mut rng, 2, 4, 4);
            let dy = random_tensor(&mut rng, 2, 2, 2);
            let (y, idx) = maxpool2x2(&x);
            let dx = maxpool2x2_backward(&dy, &idx);
            let mut want_dx = Tensor::zeros(2, 4, 4);
            for c in 0..2 {
                for oy in 0..2 {
                    for ox in 0..2 {
                        let cells = [(0, 0), (0, 1), (1, 0), (1, 1)].map(|(a, b)| (2 * oy + a, 2 * ox + b));
                        let mut best = cells[0];
                        for &p in &cells[1..] {
                            if x.at(c, p.0, p.1) > x.at(c, best.0, best.1) {
                                best = p;
                            }
                        }
                        assert_eq!(y.at(c, oy, ox), x.at(c, best.0, best.1));
                        want_dx.data[(c * 4 + best.0) * 4 + best.1] += dy.at(c, oy, ox);
                    }
                }
            }
            assert_eq!(dx, want_dx);
        }
    }

    #[test]
    fn upsample_cases() {
        let x = Tensor::from_vec(1, 1, 1, vec![2.5]).unwrap();
        assert_eq!(upsample_nearest(&x, 1).unwrap(), x);
        assert_eq!(upsample_nearest(&x, 2).unwrap().data, vec![2.5; 4]);
        let ones = Tensor::from_vec(1, 4, 6, vec![1.0; 24]).unwrap();
        let back = upsample_nearest_backward(&ones, 2);
        assert_eq!(back.shape(), (1, 2, 3));
        assert!(back.data.iter().all(|&v| v == 4.0));
        assert!(upsample_nearest(&x, 0).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) == 1.0 && sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(2.0) < sigmoid(4.0));
    }

    #[test]
    fn dropout_scaling() {
        let m = dropout_mask(100_000, 0.25, 9);
        assert!(m.iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-15));
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!((mean - 1.0).abs() < 0.02);
        assert_eq!(dropout_mask(3, 0.0, 1), vec![1.0; 3]);
    }
}
