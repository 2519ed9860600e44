//! Edge detection on LiDAR range images.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`lidar`] renders synthetic range images from parametric scenes, derives
//!    exact discontinuity labels and writes labelled datasets.
//! 2. [`imaging`] holds the raster types, PGM I/O and preprocessing filters.
//! 3. [`classical`] implements the Sobel, Roberts and Canny baselines.
//! 4. [`nn`] is a small from-scratch CNN library with hand-written gradients,
//!    the nested multi-scale detector (side outputs + weighted fusion) and the
//!    28x28 patch classifier.
//! 5. [`augment`] applies joint image/label data augmentation.
//! 6. [`train`] covers losses, optimizers, the training loop, gradient
//!    checking, dataset splitting and the LEDM model format.
//! 7. [`eval`] computes confusion matrices, metrics, ROC curves and the
//!    detector comparison table.
//!
//! The `lidar-edge` binary ([`cli`]) ties these together.

pub mod augment;
pub mod classical;
pub mod cli;
pub mod config;
pub mod error;
pub mod data;
pub mod eval;
pub mod imaging;
pub mod lidar;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use imaging::{EdgeMap, GrayImage, Kernel2D, ProbMap};
