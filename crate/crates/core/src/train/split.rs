use crate::error::{Error, Result};
use crate::lidar::{DatasetManifest, Split};
use crate::rng::SplitMix64;

/// `(train, val, test)` item counts for `n` items. Validation and test get
/// `round(n * ratio)`; train takes the remainder. If rounding would overdraw
/// `n`, test and then validation are reduced.
pub fn split_counts(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("split ratios {ratios:?} must be nonnegative and sum to 1")));
    }
    let mut val = (n as f64 * ratios[1]).round() as usize;
    let mut test = (n as f64 * ratios[2]).round() as usize;
    while val + test > n {
        if test > 0 {
            test -= 1;
        } else {
            val -= 1;
        }
    }
    Ok([n - val - test, val, test])
}

/// Tags every entry with a split: a seeded Fisher-Yates shuffle of the entry
/// positions, then contiguous train / val / test runs. Entry order is kept.
pub fn split_dataset(manifest: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<DatasetManifest> {
    let n = manifest.entries.len();
    if n == 0 {
        return Err(Error::param("cannot split an empty manifest"));
    }
    let [train, val, _] = split_counts(n, ratios)?;
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let mut out = manifest.clone();
    for (pos, &i) in order.iter().enumerate() {
        out.entries[i].split = if pos < train {
            Split::Train
        } else if pos < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}
