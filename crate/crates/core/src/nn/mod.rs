//! A minimal convolutional network library with hand-written gradients.
//!
//! Everything runs in `f64`. Layers expose a forward pass and a backward pass
//! that accumulates parameter gradients into a zeroed copy of the layer and
//! returns the gradient with respect to the layer input.
//!
//! Two models are built on top:
//!
//! * [`NestedNet`]: a fully convolutional detector with `S` stages at halving
//!   resolution. Stage `s` ends in a 1x1 side head whose logits are upsampled
//!   back to input resolution and squashed by a sigmoid, giving a side
//!   probability map `Y_s`. The fused map is the convex combination
//!   `Y = sum_s alpha_s * Y_s` with `alpha` on the probability simplex.
//! * [`PatchNet`]: a LeNet-style classifier on 28x28 patches that predicts
//!   the edge probability of the patch centre.

mod layers;
mod nested;
mod params;
mod patch;
mod tensor;

pub use layers::{
    dropout_mask, maxpool2x2, maxpool2x2_backward, relu, relu_backward, sigmoid, upsample_nearest,
    upsample_nearest_backward, ConvLayer, Dense, Padding, PoolIndices,
};
pub use nested::{fuse_sides, side_output, BackwardFault, Stage, SIMPLEX_TOLERANCE, NestedArch, NestedNet, NestedTrace, StageTrace};
pub use params::{project_to_simplex, ParamView, Parameters};
pub use patch::{extract_patch, PatchArch, PatchNet, PatchTrace, PATCH_SIZE};
pub use tensor::Tensor;
