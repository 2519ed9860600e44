//! Resampling with the pixel-centre ("align corners = false") convention:
//! output pixel `i` of `n_out` samples the source at `(i + 0.5) * n_in / n_out - 0.5`.

use super::{EdgeMap, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

#[inline]
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    (i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5
}

#[inline]
fn nearest_index(i: usize, n_in: usize, n_out: usize) -> usize {
    (((i as f64 + 0.5) * n_in as f64 / n_out as f64).floor() as usize).min(n_in - 1)
}

fn resample<T: Copy>(
    src: &[T],
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
    mode: Interpolation,
    lerp: impl Fn(T, T, T, T, f64, f64) -> T,
) -> Vec<T> {
    let mut out = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        for c in 0..ow {
            let v = match mode {
                Interpolation::Nearest => {
                    src[nearest_index(r, h, oh) * w + nearest_index(c, w, ow)]
                }
                Interpolation::Bilinear => {
                    let y = source_coord(r, h, oh).clamp(0.0, (h - 1) as f64);
                    let x = source_coord(c, w, ow).clamp(0.0, (w - 1) as f64);
                    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
                    lerp(src[y0 * w + x0], src[y0 * w + x1], src[y1 * w + x0], src[y1 * w + x1], fy, fx)
                }
            };
            out.push(v);
        }
    }
    out
}

/// Resizes an intensity image. Same-size requests return a copy.
pub fn resize(img: &GrayImage, height: usize, width: usize, mode: Interpolation) -> GrayImage {
    assert!(height > 0 && width > 0, "resize target must be at least 1x1");
    if img.dims() == (height, width) {
        return img.clone();
    }
    let data = resample(img.data(), img.dims(), (height, width), mode, |a, b, c, d, fy, fx| {
        let top = a + (b - a) * fx;
        let bottom = c + (d - c) * fx;
        top + (bottom - top) * fy
    });
    GrayImage::from_raw(height, width, data)
}

/// Resizes labels with nearest-neighbour sampling so they stay binary.
pub fn resize_edges(map: &EdgeMap, height: usize, width: usize) -> EdgeMap {
    assert!(height > 0 && width > 0, "resize target must be at least 1x1");
    if map.dims() == (height, width) {
        return map.clone();
    }
    let data = resample(map.data(), map.dims(), (height, width), Interpolation::Nearest, |a, _, _, _, _, _| a);
    EdgeMap::new(height, width, data).expect("nearest resampling keeps labels binary")
}
