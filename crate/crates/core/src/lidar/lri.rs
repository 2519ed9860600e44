//! LRI1 raster files: the magic `LRI1`, little-endian `u32` height, `u32`
//! width, `f32` max range, then `height * width` little-endian `f32` values in
//! row-major order. Probability maps use the same layout with max range 1.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::ProbMap;

use super::{LidarConfig, RangeImage};

pub const MAGIC: &[u8; 4] = b"LRI1";
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct LriRaster {
    pub height: u32,
    pub width: u32,
    pub max_range: f32,
    pub values: Vec<f32>,
}

pub fn encode(height: usize, width: usize, max_range: f64, values: &[f64]) -> Vec<u8> {
    assert_eq!(height * width, values.len());
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(max_range as f32).to_le_bytes());
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<LriRaster, String> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err("missing LRI1 magic".into());
    }
    if bytes.len() < HEADER_LEN {
        return Err("truncated header".into());
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let height = u32::from_le_bytes(word(4));
    let width = u32::from_le_bytes(word(8));
    let max_range = f32::from_le_bytes(word(12));
    let n = height as usize * width as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * n {
        return Err(format!("expected {} payload bytes, found {}", 4 * n, body.len()));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(LriRaster { height, width, max_range, values })
}

fn format_err(path: &Path, reason: String) -> Error {
    Error::Format {
        format: "LRI1",
        path: path.to_path_buf(),
        reason,
    }
}

pub fn write_range_image(path: &Path, img: &RangeImage) -> Result<()> {
    let bytes = encode(img.height(), img.width(), img.config().max_range, img.ranges());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a range image; sensor settings other than the grid size and
/// `max_range` are taken from `template`.
pub fn read_range_image(path: &Path, template: &LidarConfig) -> Result<RangeImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let raster = decode(&bytes).map_err(|r| format_err(path, r))?;
    let cfg = LidarConfig {
        height: raster.height as usize,
        width: raster.width as usize,
        max_range: raster.max_range as f64,
        ..template.clone()
    };
    RangeImage::new(cfg, raster.values.iter().map(|&v| v as f64).collect())
        .map_err(|e| format_err(path, e.to_string()))
}

pub fn write_prob_map(path: &Path, map: &ProbMap) -> Result<()> {
    fs::write(path, encode(map.height(), map.width(), 1.0, map.data())).map_err(|e| Error::io(path, e))
}
