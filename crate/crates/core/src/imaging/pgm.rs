//! Binary PGM (P5) reading and writing.
//!
//! Writing always uses maxval 255 with `round(v * 255)` quantisation after
//! clamping to [0, 1]. Reading accepts any maxval up to 65535 (16-bit samples
//! are big-endian) and header comments.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{EdgeMap, GrayImage};

pub fn encode(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn encode_edges(map: &EdgeMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(map.data().iter().map(|&v| v * 255));
    out
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> std::result::Result<Header, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("missing P5 magic".into());
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(format!("expected a number at byte {start}"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|e| format!("bad header number: {e}"))?;
    }
    // Exactly one whitespace byte separates the header from the samples.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing whitespace after maxval".into()),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(format!("degenerate size {width}x{height}"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} outside 1..=65535"));
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        maxval: maxval as u32,
        data_offset: pos,
    })
}

/// Decodes samples scaled to [0, 1].
pub fn decode(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height;
    let body = &bytes[h.data_offset..];
    let scale = 1.0 / h.maxval as f64;
    let data: Vec<f64> = if h.maxval < 256 {
        if body.len() < n {
            return Err(format!("expected {n} samples, found {}", body.len()));
        }
        body[..n].iter().map(|&b| (b as f64 * scale).min(1.0)).collect()
    } else {
        if body.len() < 2 * n {
            return Err(format!("expected {} bytes of 16-bit samples, found {}", 2 * n, body.len()));
        }
        body[..2 * n]
            .chunks_exact(2)
            .map(|p| (u16::from_be_bytes([p[0], p[1]]) as f64 * scale).min(1.0))
            .collect()
    };
    GrayImage::new(h.height, h.width, data).map_err(|e| e.to_string())
}

fn format_err(path: &Path, reason: String) -> Error {
    Error::Format {
        format: "PGM",
        path: path.to_path_buf(),
        reason,
    }
}

pub fn read_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|r| format_err(path, r))
}

/// Reads a label image; samples at or above half of maxval are edges.
pub fn read_edges(path: &Path) -> Result<EdgeMap> {
    let img = read_image(path)?;
    Ok(EdgeMap::from_fn(img.height(), img.width(), |r, c| img.get(r, c) >= 0.5))
}

pub fn write_image(path: &Path, img: &GrayImage) -> Result<()> {
    fs::write(path, encode(img)).map_err(|e| Error::io(path, e))
}

pub fn write_edges(path: &Path, map: &EdgeMap) -> Result<()> {
    fs::write(path, encode_edges(map)).map_err(|e| Error::io(path, e))
}
