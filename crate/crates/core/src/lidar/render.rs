use crate::error::{Error, Result};
use crate::imaging::{EdgeMap, GrayImage};
use crate::rng::SplitMix64;

use super::{LidarConfig, RangeImage, Scene};

/// Smallest range a noisy return may take, meters.
const MIN_RANGE: f64 = 1e-3;

/// Renders `scene` on the beam grid of `cfg`.
///
/// Labels are computed from the clean ranges with [`ground_truth_edges`];
/// then every pixel, in row-major order, draws one Gaussian noise sample and
/// one dropout uniform from the SplitMix64 stream seeded with `seed`. Noisy
/// ranges are clamped to `[1 mm, max_range]`; dropped beams take `max_range`.
pub fn render_scene(scene: &Scene, cfg: &LidarConfig, delta: f64, seed: u64) -> Result<(RangeImage, EdgeMap)> {
    cfg.validate()?;
    scene.validate(cfg.max_range)?;
    let (h, w) = (cfg.height, cfg.width);
    let mut ranges = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            ranges.push(scene.range_at(r, c));
        }
    }
    let clean = RangeImage::new(cfg.clone(), ranges)?;
    let edges = ground_truth_edges(&clean, delta)?;

    let mut rng = SplitMix64::new(seed);
    let mut noisy = clean.ranges;
    for v in noisy.iter_mut() {
        let n = rng.normal();
        let dropped = rng.bernoulli(cfg.dropout_prob);
        *v = if dropped {
            cfg.max_range
        } else {
            (*v + cfg.noise_sigma * n).clamp(MIN_RANGE, cfg.max_range)
        };
    }
    Ok((RangeImage { ranges: noisy, config: cfg.clone() }, edges))
}

/// Discontinuity labels on the nearer surface.
///
/// For pixel `p`, among the 4-neighbours `q` with `|r(p) - r(q)| > delta`
/// take the one with the largest jump (ties: smallest row-major index of
/// `q`); `p` is an edge iff it is the nearer of the two.
pub fn ground_truth_edges(img: &RangeImage, delta: f64) -> Result<EdgeMap> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::param(format!("edge delta must be > 0, got {delta}")));
    }
    let (h, w) = img.dims();
    Ok(EdgeMap::from_fn(h, w, |r, c| {
        let here = img.get(r, c);
        // Neighbours in row-major index order: up, left, right, down.
        let neighbours = [
            (r > 0).then(|| (r - 1, c)),
            (c > 0).then(|| (r, c - 1)),
            (c + 1 < w).then(|| (r, c + 1)),
            (r + 1 < h).then(|| (r + 1, c)),
        ];
        let mut best: Option<(f64, f64)> = None;
        for (nr, nc) in neighbours.into_iter().flatten() {
            let other = img.get(nr, nc);
            let jump = (here - other).abs();
            if jump > delta && best.is_none_or(|(j, _)| jump > j) {
                best = Some((jump, other));
            }
        }
        best.is_some_and(|(_, other)| here < other)
    }))
}

/// Near is bright: `v = 1 - range / max_range`, clamped to [0, 1].
pub fn range_to_intensity(img: &RangeImage) -> GrayImage {
    let max = img.config().max_range;
    GrayImage::from_raw(
        img.height(),
        img.width(),
        img.ranges().iter().map(|&r| (1.0 - r / max).clamp(0.0, 1.0)).collect(),
    )
}
