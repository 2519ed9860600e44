//! Baseline detectors: Sobel and Roberts gradient operators with relative
//! thresholding, and the Canny pipeline.

mod canny;
mod gradient;

pub use canny::{canny, non_maximum_suppression, CannyParams};
pub use gradient::{roberts, sobel, threshold_magnitude, GradientField, SOBEL_X, SOBEL_Y};
