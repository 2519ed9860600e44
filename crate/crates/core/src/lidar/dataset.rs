use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{pgm, resize, resize_edges, Interpolation};
use crate::rng::SplitMix64;

use super::{lri, range_to_intensity, render_scene, LidarConfig, Primitive, Scene};

pub const GENERATOR_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

/// One manifest line. Paths are relative to the dataset directory; `range`
/// is absent for ingested image/label pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub range: Option<String>,
    pub intensity: String,
    pub label: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    pub generator_version: u32,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            for p in e.range.iter().chain([&e.intensity, &e.label]) {
                if !seen.insert(p.as_str()) {
                    return Err(Error::param(format!("duplicate manifest path {p}")));
                }
            }
        }
        Ok(())
    }
}

/// Sampling ranges for synthetic scenes. Interval fields are `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenePolicy {
    pub min_primitives: usize,
    pub max_primitives: usize,
    pub disk_weight: f64,
    pub rect_weight: f64,
    pub half_plane_weight: f64,
    /// Disk radius, pixels.
    pub disk_radius: [f64; 2],
    /// Rectangle side length, pixels.
    pub rect_size: [f64; 2],
    /// Primitive range, meters.
    pub object_range: [f64; 2],
    /// Background range, meters.
    pub background_range: [f64; 2],
}

impl Default for ScenePolicy {
    fn default() -> Self {
        Self {
            min_primitives: 2,
            max_primitives: 6,
            disk_weight: 1.0,
            rect_weight: 1.0,
            half_plane_weight: 0.5,
            disk_radius: [3.0, 14.0],
            rect_size: [5.0, 28.0],
            object_range: [4.0, 40.0],
            background_range: [30.0, 48.0],
        }
    }
}

impl ScenePolicy {
    /// Background-only scenes at a fixed range.
    pub fn empty(background: f64) -> Self {
        Self {
            min_primitives: 0,
            max_primitives: 0,
            background_range: [background, background],
            ..Default::default()
        }
    }

    pub fn validate(&self, cfg: &LidarConfig) -> Result<()> {
        let interval = |name: &str, [lo, hi]: [f64; 2], min: f64, max: f64| -> Result<()> {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo > min && hi <= max) {
                return Err(Error::param(format!(
                    "scene policy {name} [{lo}, {hi}] must be ordered within ({min}, {max}]"
                )));
            }
            Ok(())
        };
        if self.min_primitives > self.max_primitives {
            return Err(Error::param("scene policy min_primitives > max_primitives"));
        }
        let weights = [self.disk_weight, self.rect_weight, self.half_plane_weight];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("scene policy weights must be finite and >= 0"));
        }
        if self.max_primitives > 0 && weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::param("scene policy needs a positive primitive weight"));
        }
        interval("disk_radius", self.disk_radius, 0.0, f64::INFINITY)?;
        interval("rect_size", self.rect_size, 0.0, f64::INFINITY)?;
        interval("object_range", self.object_range, 0.0, cfg.max_range)?;
        interval("background_range", self.background_range, 0.0, cfg.max_range)?;
        Ok(())
    }

    /// Draw order: background range, primitive count, then per primitive its
    /// kind followed by its geometry and range.
    pub fn sample(&self, cfg: &LidarConfig, rng: &mut SplitMix64) -> Scene {
        let (h, w) = (cfg.height as f64, cfg.width as f64);
        let [blo, bhi] = self.background_range;
        let background_range = rng.uniform(blo, bhi);
        let count = rng.int_inclusive(self.min_primitives as i64, self.max_primitives as i64) as usize;
        let total = self.disk_weight + self.rect_weight + self.half_plane_weight;
        let [rlo, rhi] = self.object_range;
        let primitives = (0..count)
            .map(|_| {
                let pick = rng.next_f64() * total;
                if pick < self.disk_weight {
                    let cx = rng.uniform(0.0, w);
                    let cy = rng.uniform(0.0, h);
                    let radius = rng.uniform(self.disk_radius[0], self.disk_radius[1]);
                    Primitive::Disk { cx, cy, radius, range: rng.uniform(rlo, rhi) }
                } else if pick < self.disk_weight + self.rect_weight {
                    let sw = rng.uniform(self.rect_size[0], self.rect_size[1]);
                    let sh = rng.uniform(self.rect_size[0], self.rect_size[1]);
                    let cx = rng.uniform(0.0, w);
                    let cy = rng.uniform(0.0, h);
                    Primitive::Rect {
                        x0: cx - sw / 2.0,
                        y0: cy - sh / 2.0,
                        x1: cx + sw / 2.0,
                        y1: cy + sh / 2.0,
                        range: rng.uniform(rlo, rhi),
                    }
                } else {
                    let px = rng.uniform(0.0, w);
                    let py = rng.uniform(0.0, h);
                    let angle = rng.uniform(0.0, std::f64::consts::TAU);
                    Primitive::HalfPlane { px, py, angle, range: rng.uniform(rlo, rhi) }
                }
            })
            .collect();
        Scene { primitives, background_range }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn sample_paths(id: &str) -> (String, String, String) {
    (format!("range/{id}.lri"), format!("intensity/{id}.pgm"), format!("labels/{id}.pgm"))
}

/// Generates `n` labelled samples under `out_dir` and writes an unassigned
/// manifest. Image `i` is rendered from sub-seed `SplitMix64::derive(seed, i)`.
pub fn generate_dataset(
    n: usize,
    cfg: &LidarConfig,
    policy: &ScenePolicy,
    delta: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::param("dataset size must be >= 1"));
    }
    cfg.validate()?;
    policy.validate(cfg)?;
    if !(delta > 0.0) {
        return Err(Error::param(format!("edge delta must be > 0, got {delta}")));
    }
    for sub in ["range", "intensity", "labels"] {
        create_dir(&out_dir.join(sub))?;
    }

    let rendered: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::new(SplitMix64::derive(seed, i as u64));
            let scene = policy.sample(cfg, &mut rng);
            render_scene(&scene, cfg, delta, rng.next_u64())
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(n);
    for (i, (range, label)) in rendered.into_iter().enumerate() {
        let id = format!("{i:06}");
        let (range_path, intensity_path, label_path) = sample_paths(&id);
        lri::write_range_image(&out_dir.join(&range_path), &range)?;
        pgm::write_image(&out_dir.join(&intensity_path), &range_to_intensity(&range))?;
        pgm::write_edges(&out_dir.join(&label_path), &label)?;
        entries.push(ManifestEntry {
            id,
            range: Some(range_path),
            intensity: intensity_path,
            label: label_path,
            split: Split::Unassigned,
        });
    }
    let manifest = DatasetManifest { entries, seed, generator_version: GENERATOR_VERSION };
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

/// Copies external image/label PGM pairs into a dataset directory.
///
/// `source` must contain `images/` and `labels/` with matching file names.
/// Images are resized bilinearly and labels by nearest neighbour to
/// `height x width`.
pub fn ingest_pgm_pairs(source: &Path, out_dir: &Path, height: usize, width: usize) -> Result<DatasetManifest> {
    let image_dir = source.join("images");
    let mut names: Vec<PathBuf> = fs::read_dir(&image_dir)
        .map_err(|e| Error::io(&image_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Missing(format!("no .pgm images in {}", image_dir.display())));
    }
    for sub in ["intensity", "labels"] {
        create_dir(&out_dir.join(sub))?;
    }
    let mut entries = Vec::new();
    for (i, image_path) in names.iter().enumerate() {
        let label_path = source.join("labels").join(image_path.file_name().unwrap());
        let img = pgm::read_image(image_path)?;
        let label = pgm::read_edges(&label_path)?;
        if img.dims() != label.dims() {
            return Err(Error::dim(format!(
                "{} is {:?} but its label is {:?}",
                image_path.display(),
                img.dims(),
                label.dims()
            )));
        }
        let id = format!("{i:06}");
        let (_, intensity_rel, label_rel) = sample_paths(&id);
        pgm::write_image(&out_dir.join(&intensity_rel), &resize(&img, height, width, Interpolation::Bilinear))?;
        pgm::write_edges(&out_dir.join(&label_rel), &resize_edges(&label, height, width))?;
        entries.push(ManifestEntry {
            id,
            range: None,
            intensity: intensity_rel,
            label: label_rel,
            split: Split::Unassigned,
        });
    }
    let manifest = DatasetManifest { entries, seed: 0, generator_version: GENERATOR_VERSION };
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.validate()?;
    let path = dir.join(MANIFEST_FILE);
    let mut out = Vec::new();
    for e in &manifest.entries {
        serde_json::to_writer(&mut out, e).expect("manifest entries serialize");
        out.push(b'\n');
    }
    let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    file.write_all(&out).map_err(|e| Error::io(&path, e))
}

/// Reads `manifest.jsonl` from `dir`. Seed and version are not stored in the
/// manifest itself and are returned as 0 / [`GENERATOR_VERSION`].
pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut entries = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| Error::Format {
            format: "manifest",
            path: path.clone(),
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        entries.push(entry);
    }
    let manifest = DatasetManifest { entries, seed: 0, generator_version: GENERATOR_VERSION };
    manifest.validate()?;
    Ok(manifest)
}
