use crate::error::{Error, Result};
use crate::imaging::{clamp_index, EdgeMap, GrayImage, ProbMap};

/// Horizontal Sobel kernel in correlation orientation: positive response when
/// intensity increases with the column.
pub const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
/// Transpose of [`SOBEL_X`]: positive when intensity increases with the row.
pub const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    height: usize,
    width: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl GradientField {
    fn from_components(height: usize, width: usize, gx: Vec<f64>, gy: Vec<f64>) -> Self {
        let magnitude = gx.iter().zip(&gy).map(|(x, y)| (x * x + y * y).sqrt()).collect();
        Self { height, width, gx, gy, magnitude }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitude.iter().copied().fold(0.0, f64::max)
    }

    /// Magnitude divided by its maximum; an all-zero field maps to zeros.
    /// Thresholding this map at `t` agrees with [`threshold_magnitude`] up to
    /// rounding at the cut.
    pub fn normalized(&self) -> ProbMap {
        let max = self.max_magnitude();
        let data = if max > 0.0 {
            self.magnitude.iter().map(|m| (m / max).min(1.0)).collect()
        } else {
            vec![0.0; self.magnitude.len()]
        };
        ProbMap::new(self.height, self.width, data).expect("normalized magnitude lies in [0, 1]")
    }
}

/// Sobel gradients with replicate border.
///
/// Evaluated as weighted sums of differences (`right - left`, `below - above`),
/// which equals correlating with [`SOBEL_X`] / [`SOBEL_Y`] but is exactly zero
/// on flat regions.
pub fn sobel(img: &GrayImage) -> Result<GradientField> {
    let (h, w) = img.dims();
    if h < 3 || w < 3 {
        return Err(Error::dim(format!("sobel needs at least a 3x3 image, got {h}x{w}")));
    }
    let at = |r: isize, c: isize| img.get(clamp_index(r, h), clamp_index(c, w));
    let mut gx = Vec::with_capacity(h * w);
    let mut gy = Vec::with_capacity(h * w);
    for r in 0..h as isize {
        for c in 0..w as isize {
            gx.push(
                (at(r - 1, c + 1) - at(r - 1, c - 1))
                    + 2.0 * (at(r, c + 1) - at(r, c - 1))
                    + (at(r + 1, c + 1) - at(r + 1, c - 1)),
            );
            gy.push(
                (at(r + 1, c - 1) - at(r - 1, c - 1))
                    + 2.0 * (at(r + 1, c) - at(r - 1, c))
                    + (at(r + 1, c + 1) - at(r - 1, c + 1)),
            );
        }
    }
    Ok(GradientField::from_components(h, w, gx, gy))
}

/// Roberts cross. Kernels `[[1,0],[0,-1]]` and `[[0,1],[-1,0]]` are anchored
/// at their top-left cell; samples past the bottom/right edge are 0.
pub fn roberts(img: &GrayImage) -> Result<GradientField> {
    let (h, w) = img.dims();
    if h < 2 || w < 2 {
        return Err(Error::dim(format!("roberts needs at least a 2x2 image, got {h}x{w}")));
    }
    let at = |r: usize, c: usize| if r < h && c < w { img.get(r, c) } else { 0.0 };
    let mut g1 = Vec::with_capacity(h * w);
    let mut g2 = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            g1.push(at(r, c) - at(r + 1, c + 1));
            g2.push(at(r, c + 1) - at(r + 1, c));
        }
    }
    Ok(GradientField::from_components(h, w, g1, g2))
}

/// Marks pixels whose magnitude is at least `t * max(magnitude)`.
pub fn threshold_magnitude(g: &GradientField, t: f64) -> Result<EdgeMap> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param(format!("threshold fraction must be in [0, 1], got {t}")));
    }
    let (h, w) = g.dims();
    let max = g.max_magnitude();
    if max == 0.0 {
        return Ok(EdgeMap::zeros(h, w));
    }
    let cut = t * max;
    EdgeMap::new(h, w, g.magnitude.iter().map(|&m| (m >= cut) as u8).collect())
}
