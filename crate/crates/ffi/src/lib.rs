//! C ABI for the `lidar-edge` detectors, metrics and model inference.
//!
//! Conventions:
//!
//! * Every fallible function returns a [`LeStatus`]; on failure a message is
//!   available from [`le_last_error`] on the same thread.
//! * Images and models are opaque handles created by `*_new` / `*_read` /
//!   `*_load` and released with the matching `*_free`.
//! * Raster outputs go to caller-owned buffers of `height * width` elements in
//!   row-major order; the buffer length is passed explicitly and checked.
//! * Panics never cross the boundary; they are reported as
//!   [`LeStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use lidar_edge::classical::{canny, roberts, sobel, CannyParams};
use lidar_edge::eval::{confusion, gradient_edges, metrics};
use lidar_edge::imaging::pgm;
use lidar_edge::lidar::tof_to_distance;
use lidar_edge::nn::Tensor;
use lidar_edge::train::{load_model, Model};
use lidar_edge::{EdgeMap, Error, GrayImage};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Io = 4,
    Format = 5,
    Model = 6,
    Internal = 7,
}

/// Opaque grayscale image with finite pixel values.
pub struct LeImage(GrayImage);

/// Opaque trained network (nested or patch).
pub struct LeModel(Model);

/// Pixel counts and derived scores.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LeMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("NULs removed"));
}

fn status_of(err: &Error) -> LeStatus {
    match err {
        Error::Dimension(_) => LeStatus::Dimension,
        Error::Parameter(_) | Error::Config(_) => LeStatus::InvalidArgument,
        Error::Io { .. } | Error::Missing(_) => LeStatus::Io,
        Error::Format { .. } => LeStatus::Format,
        Error::ModelLoad { .. } => LeStatus::Model,
        Error::Divergence(_) => LeStatus::Internal,
    }
}

struct Failure(LeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: LeStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LeStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LeStatus::Internal
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    match p.as_ref() {
        Some(r) => Ok(r),
        None => fail(LeStatus::NullPointer, format!("{what} is NULL")),
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(LeStatus::NullPointer, "path is NULL");
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(LeStatus::InvalidArgument, "path is not valid UTF-8"),
    }
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return fail(LeStatus::NullPointer, "output buffer is NULL");
    }
    if len != need {
        return fail(LeStatus::Dimension, format!("output buffer holds {len} elements, need {need}"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return fail(LeStatus::NullPointer, format!("{what} is NULL"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return fail(LeStatus::NullPointer, "output handle pointer is NULL");
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn write_edges(edges: &EdgeMap, out: &mut [u8]) {
    out.copy_from_slice(edges.data());
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn le_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn le_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies `height * width` row-major values into a new image.
///
/// # Safety
/// `data` must point to `height * width` readable doubles and `out` must be
/// a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn le_image_new(height: usize, width: usize, data: *const f64, out: *mut *mut LeImage) -> LeStatus {
    guard(|| {
        let n = height.checked_mul(width).ok_or(Failure(LeStatus::Dimension, "image size overflows".into()))?;
        let values = in_slice(data, n, "data")?.to_vec();
        store(out, LeImage(GrayImage::new(height, width, values)?))
    })
}

/// Reads an 8- or 16-bit binary PGM.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn le_image_read_pgm(path: *const c_char, out: *mut *mut LeImage) -> LeStatus {
    guard(|| {
        let path = path_arg(path)?;
        store(out, LeImage(pgm::read_image(&path)?))
    })
}

/// Releases an image; NULL is ignored.
///
/// # Safety
/// `img` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn le_image_free(img: *mut LeImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// # Safety
/// `img` must be a live image handle; `height` and `width` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn le_image_dims(img: *const LeImage, height: *mut usize, width: *mut usize) -> LeStatus {
    guard(|| {
        let img = borrow(img, "image")?;
        if height.is_null() || width.is_null() {
            return fail(LeStatus::NullPointer, "dimension output is NULL");
        }
        (*height, *width) = img.0.dims();
        Ok(())
    })
}

/// Sobel edges: magnitude at least `threshold` times its maximum.
///
/// # Safety
/// `img` must be a live image handle and `out` must hold `out_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn le_sobel(img: *const LeImage, threshold: f64, out: *mut u8, out_len: usize) -> LeStatus {
    guard(|| {
        let img = &borrow(img, "image")?.0;
        let out = out_slice(out, out_len, img.len())?;
        if !(0.0..=1.0).contains(&threshold) {
            return fail(LeStatus::InvalidArgument, format!("threshold must be in [0, 1], got {threshold}"));
        }
        write_edges(&gradient_edges(&sobel(img)?, threshold), out);
        Ok(())
    })
}

/// Roberts cross edges; same threshold convention as [`le_sobel`].
///
/// # Safety
/// `img` must be a live image handle and `out` must hold `out_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn le_roberts(img: *const LeImage, threshold: f64, out: *mut u8, out_len: usize) -> LeStatus {
    guard(|| {
        let img = &borrow(img, "image")?.0;
        let out = out_slice(out, out_len, img.len())?;
        if !(0.0..=1.0).contains(&threshold) {
            return fail(LeStatus::InvalidArgument, format!("threshold must be in [0, 1], got {threshold}"));
        }
        write_edges(&gradient_edges(&roberts(img)?, threshold), out);
        Ok(())
    })
}

/// Canny edges. `low` and `high` are fractions of the maximum gradient
/// magnitude after smoothing with `sigma`.
///
/// # Safety
/// `img` must be a live image handle and `out` must hold `out_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn le_canny(
    img: *const LeImage,
    sigma: f64,
    low: f64,
    high: f64,
    out: *mut u8,
    out_len: usize,
) -> LeStatus {
    guard(|| {
        let img = &borrow(img, "image")?.0;
        let out = out_slice(out, out_len, img.len())?;
        write_edges(&canny(img, CannyParams { sigma, low, high })?, out);
        Ok(())
    })
}

/// Confusion counts and scores of a binary prediction against ground truth.
/// Nonzero bytes count as edges; `tolerance` is the matching radius.
///
/// # Safety
/// `pred` and `truth` must each hold `height * width` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn le_metrics(
    pred: *const u8,
    truth: *const u8,
    height: usize,
    width: usize,
    tolerance: usize,
    out: *mut LeMetrics,
) -> LeStatus {
    guard(|| {
        let n = height.checked_mul(width).ok_or(Failure(LeStatus::Dimension, "image size overflows".into()))?;
        let binarize = |s: &[u8]| s.iter().map(|&v| (v != 0) as u8).collect::<Vec<u8>>();
        let pred = EdgeMap::new(height, width, binarize(in_slice(pred, n, "pred")?))?;
        let truth = EdgeMap::new(height, width, binarize(in_slice(truth, n, "truth")?))?;
        if out.is_null() {
            return fail(LeStatus::NullPointer, "metrics output is NULL");
        }
        let cm = confusion(&pred, &truth, tolerance)?;
        let m = metrics(&cm)?;
        *out = LeMetrics {
            tp: cm.tp as u64,
            fp: cm.fp as u64,
            fn_: cm.fn_ as u64,
            tn: cm.tn as u64,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        };
        Ok(())
    })
}

/// Loads an LEDM model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn le_model_load(path: *const c_char, out: *mut *mut LeModel) -> LeStatus {
    guard(|| {
        let path = path_arg(path)?;
        store(out, LeModel(load_model(&path)?))
    })
}

/// Releases a model; NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn le_model_free(model: *mut LeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Per-pixel edge probabilities. Nested models require the image size they
/// were built for; patch models accept any size.
///
/// # Safety
/// `model` and `img` must be live handles; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn le_model_predict(
    model: *const LeModel,
    img: *const LeImage,
    out: *mut f64,
    out_len: usize,
) -> LeStatus {
    guard(|| {
        let model = &borrow(model, "model")?.0;
        let img = &borrow(img, "image")?.0;
        let out = out_slice(out, out_len, img.len())?;
        let prob = match model {
            Model::Nested(net) => net.predict(&Tensor::from_image(img))?,
            Model::Patch(net) => net.predict_map(img)?,
        };
        out.copy_from_slice(prob.data());
        Ok(())
    })
}

/// One-way distance `c * tof / 2` for a round-trip time of flight.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn le_tof_to_distance(tof: f64, c: f64, out: *mut f64) -> LeStatus {
    guard(|| {
        if out.is_null() {
            return fail(LeStatus::NullPointer, "distance output is NULL");
        }
        *out = tof_to_distance(tof, c)?;
        Ok(())
    })
}
