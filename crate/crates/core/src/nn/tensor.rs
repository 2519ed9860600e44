use crate::error::{Error, Result};
use crate::imaging::GrayImage;

/// Dense `channels x height x width` array, row-major within each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::dim(format!(
                "tensor {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn from_image(img: &GrayImage) -> Self {
        Self { channels: 1, height: img.height(), width: img.width(), data: img.data().to_vec() }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[(c * self.height + r) * self.width + col]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }
}
