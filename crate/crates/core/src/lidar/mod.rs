//! Range-image simulation: time-of-flight ranging, scene rendering with
//! sensor noise, exact discontinuity labels, point-cloud export and labelled
//! dataset generation.

mod cloud;
mod dataset;
pub mod lri;
mod render;
mod scene;

pub use cloud::{beam_angles, range_image_to_point_cloud, PointCloud};
pub use dataset::{
    generate_dataset, ingest_pgm_pairs, load_manifest, write_manifest, DatasetManifest, ManifestEntry, ScenePolicy,
    Split, GENERATOR_VERSION, MANIFEST_FILE,
};
pub use render::{ground_truth_edges, range_to_intensity, render_scene};
pub use scene::{Primitive, Scene};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Round-trip time of flight to one-way distance: `c * tof / 2`.
pub fn tof_to_distance(tof: f64, c: f64) -> Result<f64> {
    if !(tof >= 0.0) || !tof.is_finite() {
        return Err(Error::param(format!("time of flight must be >= 0, got {tof}")));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::param(format!("propagation speed must be > 0, got {c}")));
    }
    Ok(c * tof / 2.0)
}

/// Sensor model for a uniform angular beam grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarConfig {
    /// Propagation speed, m/s.
    pub c: f64,
    /// Horizontal field of view, radians.
    pub h_fov: f64,
    /// Vertical field of view, radians.
    pub v_fov: f64,
    pub height: usize,
    pub width: usize,
    /// Meters; also the value stored for beams without a return.
    pub max_range: f64,
    /// Standard deviation of additive range noise, meters.
    pub noise_sigma: f64,
    /// Probability that a beam produces no return.
    pub dropout_prob: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            c: SPEED_OF_LIGHT,
            h_fov: 90f64.to_radians(),
            v_fov: 45f64.to_radians(),
            height: 64,
            width: 64,
            max_range: 50.0,
            noise_sigma: 0.05,
            dropout_prob: 0.01,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.c, self.h_fov, self.v_fov, self.max_range, self.noise_sigma, self.dropout_prob]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("lidar config values must be finite"));
        }
        if self.c <= 0.0 {
            return Err(Error::param("lidar.c must be > 0"));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::param("lidar beam grid must be at least 1x1"));
        }
        if self.h_fov <= 0.0 || self.v_fov <= 0.0 {
            return Err(Error::param("lidar fields of view must be > 0"));
        }
        if self.max_range <= 0.0 {
            return Err(Error::param("lidar.max_range must be > 0"));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::param("lidar.noise_sigma must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::param("lidar.dropout_prob must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Row-major range raster in meters. Beams without a return hold exactly
/// `config.max_range`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    ranges: Vec<f64>,
    config: LidarConfig,
}

impl RangeImage {
    /// Dimensions come from `config.height` / `config.width`.
    pub fn new(config: LidarConfig, ranges: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if ranges.len() != config.height * config.width {
            return Err(Error::dim(format!(
                "{}x{} range image needs {} values, got {}",
                config.height,
                config.width,
                config.height * config.width,
                ranges.len()
            )));
        }
        if let Some(i) = ranges.iter().position(|&r| !(r > 0.0 && r <= config.max_range)) {
            return Err(Error::param(format!(
                "range {} at index {i} outside (0, {}]",
                ranges[i], config.max_range
            )));
        }
        Ok(Self { ranges, config })
    }

    pub fn height(&self) -> usize {
        self.config.height
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.config.height, self.config.width)
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn config(&self) -> &LidarConfig {
        &self.config
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.ranges[row * self.config.width + col]
    }

    pub fn is_return(&self, row: usize, col: usize) -> bool {
        self.get(row, col) < self.config.max_range
    }
}
