use crate::error::{Error, Result};

use super::convolve::clamp_index;
use super::GrayImage;

/// Normalised 1-D Gaussian of radius `ceil(3 sigma)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("gaussian sigma must be > 0, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    Ok(k)
}

fn convolve_rows(src: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![0.0; h * w];
    for row in 0..h {
        let line = &src[row * w..(row + 1) * w];
        for c in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * line[clamp_index(c as isize + i as isize - r, w)];
            }
            out[row * w + c] = acc;
        }
    }
    out
}

fn convolve_cols(src: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![0.0; h * w];
    for row in 0..h {
        for (i, &kv) in k.iter().enumerate() {
            let sr = clamp_index(row as isize + i as isize - r, h);
            let (dst, line) = (&mut out[row * w..(row + 1) * w], &src[sr * w..(sr + 1) * w]);
            for (d, &s) in dst.iter_mut().zip(line) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Separable Gaussian blur with replicate border.
///
/// Results are clamped to the input's value range; a weighted average with
/// nonnegative weights cannot leave it, so this only removes rounding drift.
pub fn gaussian_filter(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    let k = gaussian_kernel_1d(sigma)?;
    let (h, w) = img.dims();
    let (lo, hi) = img.min_max();
    let tmp = convolve_rows(img.data(), h, w, &k);
    let mut out = convolve_cols(&tmp, h, w, &k);
    out.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    Ok(GrayImage::from_raw(h, w, out))
}

/// Median over the replicate-padded `(2r+1)^2` window.
pub fn median_filter(img: &GrayImage, radius: usize) -> Result<GrayImage> {
    if radius == 0 {
        return Err(Error::param("median radius must be >= 1"));
    }
    let (h, w) = img.dims();
    let r = radius as isize;
    let side = 2 * radius + 1;
    let mut window = Vec::with_capacity(side * side);
    let mut out = vec![0.0; h * w];
    for row in 0..h {
        for col in 0..w {
            window.clear();
            for dr in -r..=r {
                let rr = clamp_index(row as isize + dr, h);
                for dc in -r..=r {
                    window.push(img.get(rr, clamp_index(col as isize + dc, w)));
                }
            }
            // Odd window, so the lower-middle and the middle coincide.
            let mid = (window.len() - 1) / 2;
            let (_, m, _) = window.select_nth_unstable_by(mid, f64::total_cmp);
            out[row * w + col] = *m;
        }
    }
    Ok(GrayImage::from_raw(h, w, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Affine map of `[min, max]` onto `[0, 1]`; constant images map to 0.
    MinMax01,
    /// Subtract the mean, divide by the population standard deviation
    /// (a zero deviation is replaced by 1).
    ZScore,
}

pub fn normalize(img: &GrayImage, mode: Normalization) -> GrayImage {
    let (h, w) = img.dims();
    let n = img.len() as f64;
    let data = match mode {
        Normalization::MinMax01 => {
            let (lo, hi) = img.min_max();
            let span = hi - lo;
            if span > 0.0 {
                img.data().iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
            } else {
                vec![0.0; img.len()]
            }
        }
        Normalization::ZScore => {
            let mean = img.data().iter().sum::<f64>() / n;
            let var = img.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            let div = if std > 0.0 { std } else { 1.0 };
            img.data().iter().map(|&v| (v - mean) / div).collect()
        }
    };
    GrayImage::from_raw(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_image(seed: u64, h: usize, w: usize) -> GrayImage {
        let mut rng = SplitMix64::new(seed);
        GrayImage::from_fn(h, w, |_, _| rng.next_f64())
    }

    #[test]
    fn gaussian_rejects_bad_sigma() {
        let img = GrayImage::filled(3, 3, 0.5);
        assert!(gaussian_filter(&img, 0.0).is_err());
        assert!(gaussian_filter(&img, -1.0).is_err());
    }

    #[test]
    fn gaussian_constant_is_fixed_point() {
        let img = GrayImage::filled(7, 9, 0.37);
        assert_eq!(gaussian_filter(&img, 1.3).unwrap(), img);
    }

    #[test]
    fn gaussian_impulse_centre_weight() {
        let mut img = GrayImage::filled(15, 15, 0.0);
        img.set(7, 7, 1.0);
        let out = gaussian_filter(&img, 1.0).unwrap();
        // Direct evaluation of the normalised kernel at offset (0, 0).
        let norm: f64 = (-3i32..=3).map(|x| (-(x * x) as f64 / 2.0).exp()).sum();
        let expected = 1.0 / (norm * norm);
        assert!((out.get(7, 7) - expected).abs() < 1e-15);
    }

    #[test]
    fn gaussian_matches_dense_kernel() {
        let img = random_image(5, 11, 13);
        let sigma = 1.5;
        let out = gaussian_filter(&img, sigma).unwrap();
        let radius = (3.0 * sigma).ceil() as i64;
        let mut dense = Vec::new();
        for u in -radius..=radius {
            for v in -radius..=radius {
                dense.push((u, v, (-((u * u + v * v) as f64) / (2.0 * sigma * sigma)).exp()));
            }
        }
        let total: f64 = dense.iter().map(|d| d.2).sum();
        let (h, w) = img.dims();
        for r in 0..h {
            for c in 0..w {
                let mut s = 0.0;
                for &(u, v, wt) in &dense {
                    let rr = (r as i64 + u).clamp(0, h as i64 - 1) as usize;
                    let cc = (c as i64 + v).clamp(0, w as i64 - 1) as usize;
                    s += wt / total * img.get(rr, cc);
                }
                assert!((out.get(r, c) - s).abs() <= 1e-10, "({r},{c})");
            }
        }
    }

    #[test]
    fn median_removes_salt_pixel() {
        let mut img = GrayImage::filled(5, 5, 0.0);
        img.set(2, 2, 1.0);
        let out = median_filter(&img, 1).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn median_matches_sort_oracle() {
        let img = random_image(9, 8, 10);
        let out = median_filter(&img, 1).unwrap();
        let (h, w) = img.dims();
        for r in 0..h {
            for c in 0..w {
                let mut win = Vec::new();
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let rr = (r as i64 + dr).clamp(0, h as i64 - 1) as usize;
                        let cc = (c as i64 + dc).clamp(0, w as i64 - 1) as usize;
                        win.push(img.get(rr, cc));
                    }
                }
                win.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert_eq!(out.get(r, c), win[4]);
            }
        }
        assert!(median_filter(&img, 0).is_err());
    }

    #[test]
    fn filters_stay_within_input_range() {
        for seed in 0..20 {
            let img = random_image(seed, 9, 7).map(|v| 0.2 + 0.5 * v);
            let (lo, hi) = img.min_max();
            for out in [gaussian_filter(&img, 0.8).unwrap(), median_filter(&img, 2).unwrap()] {
                assert!(out.data().iter().all(|&v| v >= lo && v <= hi && v.is_finite()));
            }
        }
        let c = GrayImage::filled(4, 4, 0.6);
        assert_eq!(median_filter(&c, 2).unwrap(), c);
    }

    #[test]
    fn normalize_cases() {
        let img = GrayImage::new(1, 3, vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(normalize(&img, Normalization::MinMax01).data(), &[0.0, 0.5, 1.0]);

        let c = GrayImage::filled(3, 3, 4.2);
        assert!(normalize(&c, Normalization::ZScore).data().iter().all(|&v| v == 0.0));
        assert!(normalize(&c, Normalization::MinMax01).data().iter().all(|&v| v == 0.0));

        let img = GrayImage::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let std = 1.25f64.sqrt();
        let z = normalize(&img, Normalization::ZScore);
        for (got, x) in z.data().iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((got - (x - 2.5) / std).abs() < 1e-15);
        }
    }

    #[test]
    fn minmax_is_idempotent() {
        for seed in 0..20 {
            let img = random_image(seed, 6, 6).map(|v| 3.0 * v - 1.0);
            let once = normalize(&img, Normalization::MinMax01);
            let twice = normalize(&once, Normalization::MinMax01);
            assert!(once.data().iter().all(|v| (0.0..=1.0).contains(v)));
            for (a, b) in once.data().iter().zip(twice.data()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
