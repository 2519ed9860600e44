use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{gaussian_filter, EdgeMap, GrayImage};

use super::gradient::{sobel, GradientField};

/// Relative slack for magnitude comparisons in non-maximum suppression,
/// as a fraction of the field's maximum magnitude.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CannyParams {
    pub sigma: f64,
    /// Weak threshold, fraction of the maximum gradient magnitude.
    pub low: f64,
    /// Strong threshold, fraction of the maximum gradient magnitude.
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self { sigma: 1.0, low: 0.1, high: 0.2 }
    }
}

/// Gradient direction quantised to 0, 45, 90 or 135 degrees, returned as the
/// `(drow, dcol)` step towards the positive neighbour.
fn quantized_step(gx: f64, gy: f64) -> (isize, isize) {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        (0, 1)
    } else if angle < 67.5 {
        (1, 1)
    } else if angle < 112.5 {
        (1, 0)
    } else {
        (1, -1)
    }
}

/// Thins the magnitude to one-pixel ridges along the quantised gradient
/// direction. Suppressed pixels are 0.
///
/// A pixel survives when its magnitude is positive, not below the neighbour
/// behind it and strictly above the neighbour ahead of it. Differences within
/// `1e-9 * max` count as ties, so an exact two-pixel plateau keeps only its
/// second pixel and the result does not depend on rounding noise.
pub fn non_maximum_suppression(g: &GradientField) -> Vec<f64> {
    let (h, w) = g.dims();
    let tol = TIE_TOLERANCE * g.max_magnitude();
    let mag = |r: isize, c: isize| {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            g.magnitude[r as usize * w + c as usize]
        }
    };
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let m = g.magnitude[i];
            if m <= tol {
                continue;
            }
            let (dr, dc) = quantized_step(g.gx[i], g.gy[i]);
            let (ri, ci) = (r as isize, c as isize);
            let behind = mag(ri - dr, ci - dc);
            let ahead = mag(ri + dr, ci + dc);
            if m - behind >= -tol && m - ahead > tol {
                out[i] = m;
            }
        }
    }
    out
}

/// Canny edge detector: Gaussian smoothing, Sobel gradients, non-maximum
/// suppression, double thresholding relative to the maximum magnitude and
/// 8-connected hysteresis.
pub fn canny(img: &GrayImage, params: CannyParams) -> Result<EdgeMap> {
    let CannyParams { sigma, low, high } = params;
    if !(0.0 <= low && low < high && high <= 1.0) {
        return Err(Error::param(format!("canny thresholds need 0 <= low < high <= 1, got {low}, {high}")));
    }
    let smoothed = gaussian_filter(img, sigma)?;
    let g = sobel(&smoothed)?;
    let (h, w) = g.dims();
    let max = g.max_magnitude();
    let mut edges = EdgeMap::zeros(h, w);
    if max == 0.0 {
        return Ok(edges);
    }
    let thin = non_maximum_suppression(&g);
    let (weak_cut, strong_cut) = (low * max, high * max);

    let mut stack: Vec<usize> = Vec::new();
    for (i, &m) in thin.iter().enumerate() {
        if m > 0.0 && m >= strong_cut {
            edges.set(i / w, i % w, true);
            stack.push(i);
        }
    }
    // Reverse so the explicit stack pops seeds in row-major order.
    stack.reverse();
    while let Some(i) = stack.pop() {
        let (r, c) = ((i / w) as isize, (i % w) as isize);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (nr, nc) = (r + dr, c + dc);
                if (dr, dc) == (0, 0) || nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                let j = nr * w + nc;
                if !edges.is_edge(nr, nc) && thin[j] > 0.0 && thin[j] >= weak_cut {
                    edges.set(nr, nc, true);
                    stack.push(j);
                }
            }
        }
    }
    Ok(edges)
}
