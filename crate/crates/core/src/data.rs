//! Loading labelled samples from a dataset directory and the preprocessing
//! applied before any detector sees them.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{
    gaussian_filter, median_filter, normalize, pgm, resize, resize_edges, EdgeMap, GrayImage, Interpolation,
    Normalization,
};
use crate::lidar::{DatasetManifest, Split};

/// An intensity image and its edge labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: GrayImage,
    pub label: EdgeMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Denoise {
    #[default]
    None,
    Gaussian,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    pub denoise: Denoise,
    /// Gaussian denoiser width in pixels.
    pub sigma: f64,
    /// Median denoiser radius in pixels.
    pub radius: usize,
    pub normalize: Option<Normalization>,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self { denoise: Denoise::None, sigma: 1.0, radius: 1, normalize: None }
    }
}

impl Preprocess {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("dataset.preprocess.sigma must be > 0, got {}", self.sigma)));
        }
        if self.radius == 0 {
            return Err(Error::Config("dataset.preprocess.radius must be >= 1".into()));
        }
        Ok(())
    }

    /// Denoise, then normalize.
    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        let img = match self.denoise {
            Denoise::None => img.clone(),
            Denoise::Gaussian => gaussian_filter(img, self.sigma)?,
            Denoise::Median => median_filter(img, self.radius)?,
        };
        Ok(match self.normalize {
            Some(mode) => normalize(&img, mode),
            None => img,
        })
    }
}

/// Reads one split of a dataset, resizing to `dims` (bilinear for images,
/// nearest for labels) when the stored size differs, then preprocessing.
pub fn load_split(
    dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
    dims: (usize, usize),
    pre: &Preprocess,
) -> Result<Vec<Sample>> {
    let entries: Vec<_> = manifest.split(split).collect();
    entries
        .par_iter()
        .map(|e| {
            let image = pgm::read_image(&dir.join(&e.intensity))?;
            let label = pgm::read_edges(&dir.join(&e.label))?;
            let image = resize(&image, dims.0, dims.1, Interpolation::Bilinear);
            let label = resize_edges(&label, dims.0, dims.1);
            Ok(Sample { id: e.id.clone(), image: pre.apply(&image)?, label })
        })
        .collect()
}
