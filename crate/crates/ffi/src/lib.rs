//! C ABI over `stwnn-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_load` /
//! `*_synth` and released with the matching `*_free`. Every fallible call
//! returns a [`StwnnStatus`]; on failure the message is available from
//! [`stwnn_last_error`] on the same thread until the next failing call.
//! Panics are caught and reported as `STWNN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use stwnn_core::autodiff::Tensor;
use stwnn_core::csi::{amplitude, synth_stream, synthetic_activity, CsiStream};
use stwnn_core::error::Error;
use stwnn_core::io::{load_stream, read_weights, save_stream};
use stwnn_core::net::{forward, Model};
use stwnn_core::volume::{segment_inputs, SegmentationConfig};

/// Outcome of a call. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StwnnStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad argument, shape, configuration or incompatible weights.
    InvalidArgument = 2,
    InsufficientData = 3,
    /// Not a file of the expected kind, or an unsupported version.
    Format = 4,
    /// Structurally damaged file.
    Corrupt = 5,
    Io = 6,
    /// Caller buffer too small; required sizes are still written.
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque CSI stream.
pub struct StwnnStream {
    inner: CsiStream,
}

/// Opaque trained network.
pub struct StwnnModel {
    inner: Model,
}

/// Segmentation settings for [`stwnn_predict_stream`]. Fill with
/// [`stwnn_segmentation_default`] and adjust.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct StwnnSegmentation {
    pub window: usize,
    pub overlap: usize,
    /// Number of used entries in `scales`.
    pub n_scales: usize,
    pub scales: [usize; 8],
    /// Subcarrier, time and antenna extent after resizing.
    pub target_shape: [usize; 3],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(StwnnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InsufficientData(_) => StwnnStatus::InsufficientData,
            Error::Format(_) => StwnnStatus::Format,
            Error::Corrupt(_) => StwnnStatus::Corrupt,
            Error::Io(_) => StwnnStatus::Io,
            _ => StwnnStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(StwnnStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> StwnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StwnnStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            StwnnStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(StwnnStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn stwnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Writes the default segmentation settings to `out`.
///
/// # Safety
/// `out` must be null or point to writable memory for one struct.
#[no_mangle]
pub unsafe extern "C" fn stwnn_segmentation_default(out: *mut StwnnSegmentation) -> StwnnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let d = SegmentationConfig::default();
        let mut scales = [0; 8];
        scales[..d.scales.len()].copy_from_slice(&d.scales);
        *out = StwnnSegmentation {
            window: d.window,
            overlap: d.overlap,
            n_scales: d.scales.len(),
            scales,
            target_shape: [d.target_shape.0, d.target_shape.1, d.target_shape.2],
        };
        Ok(())
    })
}

/// Generates a labelled synthetic stream for `class_id` of `n_classes`.
///
/// # Safety
/// `out` must be null or point to writable memory for one pointer.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn stwnn_stream_synth(
    class_id: usize,
    n_classes: usize,
    seed: u64,
    duration_s: f64,
    noise_std: f64,
    n_tx: usize,
    n_rx: usize,
    n_sub: usize,
    sample_rate_hz: f64,
    out: *mut *mut StwnnStream,
) -> StwnnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec = synthetic_activity(class_id, n_classes, seed, duration_s, noise_std, n_tx * n_rx);
        let inner = synth_stream(&spec, n_tx, n_rx, n_sub, sample_rate_hz)?;
        *out = Box::into_raw(Box::new(StwnnStream { inner }));
        Ok(())
    })
}

/// Reads a CSI1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` writable for one pointer.
#[no_mangle]
pub unsafe extern "C" fn stwnn_stream_load(path: *const c_char, out: *mut *mut StwnnStream) -> StwnnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = load_stream(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(StwnnStream { inner }));
        Ok(())
    })
}

/// Writes a CSI1 file.
///
/// # Safety
/// `stream` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn stwnn_stream_save(stream: *const StwnnStream, path: *const c_char) -> StwnnStatus {
    guard(|| {
        let s = stream.as_ref().ok_or_else(|| null("stream"))?;
        save_stream(&path_arg(path)?, &s.inner)?;
        Ok(())
    })
}

/// Packet count, or 0 for a null handle.
///
/// # Safety
/// `stream` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn stwnn_stream_len(stream: *const StwnnStream) -> usize {
    stream.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `stream` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn stwnn_stream_free(stream: *mut StwnnStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Reads a WGT1 file; the architecture comes from the file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable for one pointer.
#[no_mangle]
pub unsafe extern "C" fn stwnn_model_load(path: *const c_char, out: *mut *mut StwnnModel) -> StwnnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = read_weights(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(StwnnModel { inner }));
        Ok(())
    })
}

/// Number of output classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn stwnn_model_n_classes(model: *const StwnnModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config().n_classes)
}

/// Expected input channels (one per temporal scale), or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn stwnn_model_in_channels(model: *const StwnnModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config().in_channels)
}

/// # Safety
/// `model` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn stwnn_model_free(model: *mut StwnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Class probabilities for one input of shape `[channels, time, sub, ant]`
/// laid out row-major in `data`. Writes `n_classes` values to `probs`.
///
/// # Safety
/// `data` must hold the product of `shape` doubles; `probs` must hold
/// `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn stwnn_model_forward(
    model: *const StwnnModel,
    data: *const f64,
    shape: *const usize,
    probs: *mut f64,
    capacity: usize,
) -> StwnnStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if data.is_null() || shape.is_null() || probs.is_null() {
            return Err(null("data, shape or probs"));
        }
        let shape = std::slice::from_raw_parts(shape, 4).to_vec();
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Fail(StwnnStatus::InvalidArgument, "shape overflows".into()))?;
        let input = Tensor::new(shape, std::slice::from_raw_parts(data, n).to_vec())?;
        let out = forward(&m.inner, &input)?;
        if capacity < out.probs.len() {
            return Err(Fail(
                StwnnStatus::BufferTooSmall,
                format!("need {} probabilities, buffer holds {capacity}", out.probs.len()),
            ));
        }
        std::slice::from_raw_parts_mut(probs, out.probs.len()).copy_from_slice(&out.probs);
        Ok(())
    })
}

/// Segments `stream` and predicts a class per window. `*count` receives the
/// number of windows even when `labels` is too small.
///
/// # Safety
/// Handles must come from this library; `seg` may be null for defaults;
/// `labels` must hold `capacity` entries; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stwnn_predict_stream(
    model: *const StwnnModel,
    stream: *const StwnnStream,
    seg: *const StwnnSegmentation,
    labels: *mut usize,
    capacity: usize,
    count: *mut usize,
) -> StwnnStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let s = stream.as_ref().ok_or_else(|| null("stream"))?;
        let count = out_arg(count, "count")?;
        let cfg = match seg.as_ref() {
            None => SegmentationConfig::default(),
            Some(c) => {
                if c.n_scales > c.scales.len() {
                    return Err(Fail(StwnnStatus::InvalidArgument, format!("n_scales {} exceeds 8", c.n_scales)));
                }
                SegmentationConfig {
                    window: c.window,
                    overlap: c.overlap,
                    scales: c.scales[..c.n_scales].to_vec(),
                    target_shape: (c.target_shape[0], c.target_shape[1], c.target_shape[2]),
                }
            }
        };
        cfg.validate()?;
        let inputs = segment_inputs(&amplitude(&s.inner)?, &cfg)?;
        *count = inputs.len();
        if capacity < inputs.len() || (labels.is_null() && !inputs.is_empty()) {
            return Err(Fail(
                StwnnStatus::BufferTooSmall,
                format!("{} windows, buffer holds {capacity}", inputs.len()),
            ));
        }
        for (i, x) in inputs.iter().enumerate() {
            *labels.add(i) = forward(&m.inner, x)?.predicted();
        }
        Ok(())
    })
}
