//! Raster types, PGM I/O and the preprocessing primitives shared by every
//! detector: convolution, Gaussian/median denoising, normalisation and
//! resizing.

mod convolve;
mod filter;
pub mod pgm;
mod raster;
mod resize;

pub use convolve::{convolve2d, Border};
pub(crate) use convolve::clamp_index;
pub use filter::{gaussian_filter, gaussian_kernel_1d, median_filter, normalize, Normalization};
pub use raster::{EdgeMap, GrayImage, Kernel2D, ProbMap};
pub use resize::{resize, resize_edges, Interpolation};
