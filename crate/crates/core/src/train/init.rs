use crate::error::Result;
use crate::nn::{ConvLayer, Dense, NestedArch, NestedNet, PatchArch, PatchNet};
use crate::rng::SplitMix64;

/// He-uniform bound `sqrt(6 / fan_in)`.
pub fn he_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

fn fill_uniform(values: &mut [f64], bound: f64, rng: &mut SplitMix64) {
    values.iter_mut().for_each(|v| *v = rng.uniform(-bound, bound));
}

fn he_conv(layer: &mut ConvLayer, rng: &mut SplitMix64) {
    let fan_in = layer.in_channels * layer.kernel_h * layer.kernel_w;
    fill_uniform(&mut layer.weights, he_bound(fan_in), rng);
}

fn he_dense(layer: &mut Dense, rng: &mut SplitMix64) {
    fill_uniform(&mut layer.weights, he_bound(layer.inputs), rng);
}

/// Trunk convolutions are He-uniform; biases, side heads are zero so every
/// side map starts at 0.5; `alpha_i = 1/S`. Weights are drawn in parameter
/// order from a single stream.
pub fn init_nested(arch: NestedArch, seed: u64) -> Result<NestedNet> {
    let mut net = NestedNet::zeros(arch)?;
    let mut rng = SplitMix64::new(seed);
    for stage in &mut net.stages {
        he_conv(&mut stage.first, &mut rng);
        he_conv(&mut stage.second, &mut rng);
    }
    Ok(net)
}

/// He-uniform for the layers that feed a ReLU; the output layer feeds the
/// sigmoid and uses the Glorot bound `sqrt(6 / (fan_in + fan_out))`.
pub fn init_patch(arch: PatchArch, seed: u64) -> Result<PatchNet> {
    let mut net = PatchNet::zeros(arch)?;
    let mut rng = SplitMix64::new(seed);
    he_conv(&mut net.conv1, &mut rng);
    he_conv(&mut net.conv2, &mut rng);
    he_dense(&mut net.fc1, &mut rng);
    let glorot = (6.0 / (net.fc2.inputs + net.fc2.outputs) as f64).sqrt();
    fill_uniform(&mut net.fc2.weights, glorot, &mut rng);
    Ok(net)
}
