//! The JSON run configuration shared by every subcommand.
//!
//! Every section and field has a default, so `{}` is a valid document and a
//! file only needs the keys it changes. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentSpec;
use crate::classical::CannyParams;
use crate::data::Preprocess;
use crate::error::{Error, Result};
use crate::eval::CompareSettings;
use crate::lidar::{LidarConfig, ScenePolicy};
use crate::nn::{NestedArch, PatchArch};
use crate::train::{split_counts, TrainConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub config_version: u32,
    pub lidar: LidarConfig,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentSpec,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            config_version: CONFIG_VERSION,
            lidar: LidarConfig::default(),
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            augment: AugmentSpec::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n: usize,
    /// Range jump in meters that counts as an edge.
    pub delta: f64,
    pub policy: ScenePolicy,
    /// Train / validation / test fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
    pub preprocess: Preprocess,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n: 280,
            delta: 0.5,
            policy: ScenePolicy::default(),
            ratios: [0.70, 0.15, 0.15],
            seed: 42,
            preprocess: Preprocess::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Multi-scale network with side outputs and weighted fusion.
    #[default]
    Nested,
    /// 28x28 patch classifier applied per pixel.
    Patch,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "nested" => Ok(Self::Nested),
            "patch" => Ok(Self::Patch),
            other => Err(format!("unknown model variant {other:?} (expected nested or patch)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub nested: NestedArch,
    pub patch: PatchArch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Chebyshev matching radius in pixels; 0 is strict per-pixel scoring.
    pub tolerance: usize,
    pub n_thresholds: usize,
    pub canny_sigmas: Vec<f64>,
    pub canny_low_ratio: f64,
    /// Detectors run by `compare`, in table order.
    pub detectors: Vec<String>,
    /// Canny settings used by `detect`.
    pub canny: CannyParams,
    /// Threshold used by `detect` for Sobel and Roberts, as a fraction of the
    /// maximum gradient magnitude.
    pub gradient_threshold: f64,
    /// Probability threshold used by `detect` for the networks.
    pub cnn_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let s = CompareSettings::default();
        Self {
            tolerance: s.tolerance,
            n_thresholds: s.n_thresholds,
            canny_sigmas: s.canny_sigmas,
            canny_low_ratio: s.canny_low_ratio,
            detectors: ["cnn", "canny", "sobel", "roberts"].map(String::from).to_vec(),
            canny: CannyParams::default(),
            gradient_threshold: 0.25,
            cnn_threshold: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn compare_settings(&self) -> CompareSettings {
        CompareSettings {
            tolerance: self.tolerance,
            n_thresholds: self.n_thresholds,
            canny_sigmas: self.canny_sigmas.clone(),
            canny_low_ratio: self.canny_low_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
    /// Nested model file; defaults to `<out_dir>/model.ledm`.
    pub model: Option<PathBuf>,
    /// Patch model file; defaults to `<out_dir>/patch_model.ledm`.
    pub patch_model: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("out"), model: None, patch_model: None }
    }
}

impl PathsConfig {
    pub fn dataset_dir(&self) -> PathBuf {
        self.out_dir.join("dataset")
    }

    pub fn model_path(&self, variant: Variant) -> PathBuf {
        match variant {
            Variant::Nested => self.model.clone().unwrap_or_else(|| self.out_dir.join("model.ledm")),
            Variant::Patch => self.patch_model.clone().unwrap_or_else(|| self.out_dir.join("patch_model.ledm")),
        }
    }

    pub fn runlog_path(&self, variant: Variant) -> PathBuf {
        self.out_dir.join(match variant {
            Variant::Nested => "runlog.csv",
            Variant::Patch => "runlog_patch.csv",
        })
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks cross-field constraints; messages name the offending key.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |key: &'static str| move |e: Error| Error::Config(format!("{key}: {e}"));
        check(self.config_version == CONFIG_VERSION, || {
            format!("config_version {} is not supported (expected {CONFIG_VERSION})", self.config_version)
        })?;
        self.lidar.validate().map_err(cfg_err("lidar"))?;
        self.dataset.policy.validate(&self.lidar).map_err(cfg_err("dataset.policy"))?;
        check(self.dataset.n >= 1, || "dataset.n must be >= 1".into())?;
        check(self.dataset.delta > 0.0 && self.dataset.delta.is_finite(), || {
            format!("dataset.delta must be > 0, got {}", self.dataset.delta)
        })?;
        split_counts(self.dataset.n, self.dataset.ratios).map_err(cfg_err("dataset.ratios"))?;
        self.dataset.preprocess.validate()?;
        self.model.nested.validate().map_err(cfg_err("model.nested"))?;
        self.model.patch.validate().map_err(cfg_err("model.patch"))?;
        self.train.validate().map_err(cfg_err("train"))?;
        if self.model.variant == Variant::Nested {
            check(self.train.side_weights.len() == self.model.nested.stages(), || {
                format!(
                    "train.side_weights has {} entries but model.nested has {} stages",
                    self.train.side_weights.len(),
                    self.model.nested.stages()
                )
            })?;
        }
        self.augment.validate().map_err(cfg_err("augment"))?;
        check(self.eval.n_thresholds >= 2, || "eval.n_thresholds must be >= 2".into())?;
        check(
            !self.eval.canny_sigmas.is_empty() && self.eval.canny_sigmas.iter().all(|s| *s > 0.0 && s.is_finite()),
            || "eval.canny_sigmas must be a nonempty list of positive values".into(),
        )?;
        check((0.0..1.0).contains(&self.eval.canny_low_ratio), || "eval.canny_low_ratio must be in [0, 1)".into())?;
        let c = self.eval.canny;
        check(c.sigma > 0.0 && 0.0 <= c.low && c.low < c.high && c.high <= 1.0, || {
            "eval.canny needs sigma > 0 and 0 <= low < high <= 1".into()
        })?;
        check((0.0..=1.0).contains(&self.eval.gradient_threshold), || "eval.gradient_threshold must be in [0, 1]".into())?;
        check((0.0..=1.0).contains(&self.eval.cnn_threshold), || "eval.cnn_threshold must be in [0, 1]".into())?;
        Ok(())
    }
}
