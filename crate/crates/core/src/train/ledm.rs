//! LEDM binary model format.
//!
//! Layout (all integers little-endian `u32`, floats little-endian `f64`):
//!
//! ```text
//! "LEDM" | version = 1 | kind (1 = nested, 2 = patch)
//! S | widths[S] | input height | input width
//! tensor*  where tensor = rank | dims[rank] | values[prod(dims)]
//! CRC32 of every preceding byte
//! ```
//!
//! Tensors appear in the model's [`Parameters`] order. The patch model stores
//! `S = 3` with widths `(conv1, conv2, hidden)` and input `28 x 28`, followed
//! by its parameter tensors and a final rank-1 tensor of length 1 holding the
//! dropout rate.

use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::nn::{NestedArch, NestedNet, Parameters, PatchArch, PatchNet, PATCH_SIZE};

pub const MAGIC: &[u8; 4] = b"LEDM";
pub const VERSION: u32 = 1;
const KIND_NESTED: u32 = 1;
const KIND_PATCH: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LoadError {
    #[error("bad magic {0:?}, expected \"LEDM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported LEDM version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated")]
    Truncated,
    #[error("checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("unknown model kind {0}")]
    UnknownKind(u32),
    #[error("tensor shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{0} unexpected bytes after the checksum")]
    TrailingData(usize),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Either of the two trainable detectors.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Nested(NestedNet),
    Patch(PatchNet),
}

impl Model {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Nested(_) => "nested",
            Model::Patch(_) => "patch",
        }
    }
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&u32::try_from(v).expect("dimension fits in u32").to_le_bytes());
}

fn put_tensor(buf: &mut Vec<u8>, shape: &[usize], values: &[f64]) {
    put_u32(buf, shape.len());
    shape.iter().for_each(|&d| put_u32(buf, d));
    values.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let views = match model {
        Model::Nested(net) => {
            put_u32(&mut buf, KIND_NESTED as usize);
            put_u32(&mut buf, net.arch.stages());
            net.arch.widths.iter().for_each(|&w| put_u32(&mut buf, w));
            put_u32(&mut buf, net.arch.height);
            put_u32(&mut buf, net.arch.width);
            net.param_views()
        }
        Model::Patch(net) => {
            put_u32(&mut buf, KIND_PATCH as usize);
            put_u32(&mut buf, 3);
            for w in [net.arch.conv1_channels, net.arch.conv2_channels, net.arch.hidden] {
                put_u32(&mut buf, w);
            }
            put_u32(&mut buf, PATCH_SIZE);
            put_u32(&mut buf, PATCH_SIZE);
            net.param_views()
        }
    };
    for v in &views {
        put_tensor(&mut buf, &v.shape, v.values);
    }
    if let Model::Patch(net) = model {
        put_tensor(&mut buf, &[1], &[net.arch.dropout_rate]);
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], LoadError> {
        let end = self.pos.checked_add(n).ok_or(LoadError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(LoadError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, LoadError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> std::result::Result<usize, LoadError> {
        self.u32().map(|v| v as usize)
    }

    /// Reads one tensor and checks it against the expected shape.
    fn tensor_into(&mut self, name: &str, shape: &[usize], dst: &mut [f64]) -> std::result::Result<(), LoadError> {
        let rank = self.usize()?;
        if rank > 8 {
            return Err(LoadError::ShapeMismatch(format!("{name}: rank {rank}")));
        }
        let dims: Vec<usize> = (0..rank).map(|_| self.usize()).collect::<std::result::Result<_, _>>()?;
        if dims != shape {
            return Err(LoadError::ShapeMismatch(format!("{name}: stored {dims:?}, expected {shape:?}")));
        }
        let raw = self.take(dst.len() * 8)?;
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(8)) {
            *d = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(())
    }
}

fn fill_params<P: Parameters>(net: &mut P, r: &mut Reader<'_>) -> std::result::Result<(), LoadError> {
    let specs: Vec<(String, Vec<usize>)> = net.param_views().into_iter().map(|v| (v.name, v.shape)).collect();
    for ((name, shape), dst) in specs.iter().zip(net.param_slices_mut()) {
        r.tensor_into(name, shape, dst)?;
    }
    if !net.is_finite() {
        return Err(LoadError::Invalid("non-finite parameter".into()));
    }
    Ok(())
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Model, LoadError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(LoadError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(LoadError::UnsupportedVersion(version));
    }
    let kind = r.u32()?;
    if kind != KIND_NESTED && kind != KIND_PATCH {
        return Err(LoadError::UnknownKind(kind));
    }
    let s = r.usize()?;
    if s == 0 || s > 16 {
        return Err(LoadError::Invalid(format!("stage count {s}")));
    }
    let widths: Vec<usize> = (0..s).map(|_| r.usize()).collect::<std::result::Result<_, _>>()?;
    let (height, width) = (r.usize()?, r.usize()?);
    let model = if kind == KIND_NESTED {
        let arch = NestedArch { widths, height, width };
        let mut net = NestedNet::zeros(arch).map_err(|e| LoadError::Invalid(e.to_string()))?;
        fill_params(&mut net, &mut r)?;
        let sum: f64 = net.alpha.iter().sum();
        if net.alpha.iter().any(|&a| a < 0.0) || (sum - 1.0).abs() > crate::nn::SIMPLEX_TOLERANCE {
            return Err(LoadError::Invalid("fusion weights off the simplex".into()));
        }
        Model::Nested(net)
    } else {
        if s != 3 || height != PATCH_SIZE || width != PATCH_SIZE {
            return Err(LoadError::ShapeMismatch(format!(
                "patch model descriptor S={s}, input {height}x{width}"
            )));
        }
        let arch = PatchArch { conv1_channels: widths[0], conv2_channels: widths[1], hidden: widths[2], dropout_rate: 0.0 };
        let mut net = PatchNet::zeros(arch).map_err(|e| LoadError::Invalid(e.to_string()))?;
        fill_params(&mut net, &mut r)?;
        let mut rate = [0.0];
        r.tensor_into("dropout_rate", &[1], &mut rate)?;
        net.arch.dropout_rate = rate[0];
        net.arch.validate().map_err(|e| LoadError::Invalid(e.to_string()))?;
        Model::Patch(net)
    };
    let body_end = r.pos;
    let stored = r.u32()?;
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(LoadError::ChecksumMismatch { stored, computed });
    }
    if r.pos != bytes.len() {
        return Err(LoadError::TrailingData(bytes.len() - r.pos));
    }
    Ok(model)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|source| Error::ModelLoad { path: path.to_path_buf(), source })
}
