//! C interface to pofcap.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns a status code;
//! on failure `pofcap_last_error` describes the problem until the next call
//! on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pofcap::eval::{self, Alignment};
use pofcap::fitting::{FitConfig, FitResult, Fitter};
use pofcap::io::{self, Sequence, SequenceConfig};
use pofcap::Error;

pub const POFCAP_OK: i32 = 0;
/// A required pointer argument was null or a buffer was too small.
pub const POFCAP_ERR_ARGUMENT: i32 = 1;
/// Bad configuration, missing file or invalid UTF-8.
pub const POFCAP_ERR_CONFIG: i32 = 2;
/// Malformed data file.
pub const POFCAP_ERR_FORMAT: i32 = 3;
/// Joint sets or dimensions do not match.
pub const POFCAP_ERR_MISMATCH: i32 = 4;
/// The solver could not produce a result.
pub const POFCAP_ERR_NUMERIC: i32 = 5;
/// A Rust panic was caught at the boundary.
pub const POFCAP_ERR_PANIC: i32 = 6;

/// An opened sequence directory.
pub struct PofcapSequence {
    inner: Sequence,
}

/// A fitter bound to a model and its priors.
pub struct PofcapFitter {
    inner: Fitter,
}

/// The outcome of fitting one frame.
pub struct PofcapFitResult {
    inner: FitResult,
    joints: Vec<[f64; 3]>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Io(_) | Error::NotEnoughSamples { .. } | Error::Flow(_) => {
            POFCAP_ERR_CONFIG
        }
        Error::Container(_) | Error::Json(_) | Error::InvalidSkeleton(_) => POFCAP_ERR_FORMAT,
        Error::JointSetMismatch(_) | Error::Dimension(_) => POFCAP_ERR_MISMATCH,
        _ => POFCAP_ERR_NUMERIC,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => POFCAP_OK,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("panic inside pofcap".into());
            POFCAP_ERR_PANIC
        }
    }
}

fn lib(err: Error) -> (i32, String) {
    (status(&err), err.to_string())
}

fn null(name: &str) -> (i32, String) {
    (POFCAP_ERR_ARGUMENT, format!("{name} is null"))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, (i32, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (POFCAP_ERR_CONFIG, format!("{name} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, (i32, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pofcap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null.
#[no_mangle]
pub extern "C" fn pofcap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Generate a synthetic sequence directory from a JSON configuration.
///
/// # Safety
/// `config_json` and `out_dir` must be null or NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn pofcap_synth(config_json: *const c_char, out_dir: *const c_char) -> i32 {
    guard(|| {
        let json = text(config_json, "config_json")?;
        let out = text(out_dir, "out_dir")?;
        let config: SequenceConfig = serde_json::from_str(json)
            .map_err(|e| (POFCAP_ERR_CONFIG, format!("bad configuration: {e}")))?;
        config.validate().map_err(lib)?;
        io::write_sequence(Path::new(out), &config).map_err(lib)?;
        Ok(())
    })
}

/// Open a sequence directory written by `pofcap_synth` or the CLI.
///
/// # Safety
/// `dir` must be null or a NUL-terminated string; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn pofcap_sequence_open(
    dir: *const c_char,
    out: *mut *mut PofcapSequence,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = text(dir, "dir")?;
        let inner = Sequence::open(Path::new(dir)).map_err(lib)?;
        *out = Box::into_raw(Box::new(PofcapSequence { inner }));
        Ok(())
    })
}

/// Number of frames, or 0 for a null handle.
///
/// # Safety
/// `seq` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pofcap_sequence_len(seq: *const PofcapSequence) -> usize {
    seq.as_ref().map_or(0, |s| s.inner.len())
}

/// Number of joints of the sequence's model, or 0 for a null handle.
///
/// # Safety
/// `seq` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pofcap_sequence_joint_count(seq: *const PofcapSequence) -> usize {
    seq.as_ref()
        .map_or(0, |s| s.inner.model.skeleton.joint_count())
}

/// Copy the ground-truth joints of `frame` as `x, y, z` triples (cm).
///
/// # Safety
/// `seq` must be a live handle; `xyz` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn pofcap_sequence_ground_truth(
    seq: *const PofcapSequence,
    frame: usize,
    xyz: *mut f64,
    capacity: usize,
) -> i32 {
    guard(|| {
        let seq = handle(seq, "seq")?;
        let gt = seq.inner.ground_truth().map_err(lib)?;
        let f = gt
            .get(frame)
            .ok_or_else(|| (POFCAP_ERR_ARGUMENT, format!("frame {frame} out of range")))?;
        let flat: Vec<[f64; 3]> = f.joints.iter().map(|p| [p.x, p.y, p.z]).collect();
        copy_joints(&flat, xyz, capacity)
    })
}

/// # Safety
/// `seq` must be null or a handle from `pofcap_sequence_open`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pofcap_sequence_free(seq: *mut PofcapSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// Create a fitter for the sequence's model and priors. `config_json` may
/// be null for defaults; the model and camera always come from the sequence.
///
/// # Safety
/// `seq` must be a live handle; `config_json` null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pofcap_fitter_new(
    seq: *const PofcapSequence,
    config_json: *const c_char,
    out: *mut *mut PofcapFitter,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let seq = handle(seq, "seq")?;
        let mut config: FitConfig = if config_json.is_null() {
            FitConfig::default()
        } else {
            serde_json::from_str(text(config_json, "config_json")?)
                .map_err(|e| (POFCAP_ERR_CONFIG, format!("bad configuration: {e}")))?
        };
        let scene = &seq.inner.manifest.config.scene;
        config.model = scene.model.clone();
        config.camera = scene.camera;
        let priors = seq.inner.priors().map_err(lib)?;
        let inner = Fitter::new(config, priors).map_err(lib)?;
        *out = Box::into_raw(Box::new(PofcapFitter { inner }));
        Ok(())
    })
}

/// # Safety
/// `fitter` must be null or a handle from `pofcap_fitter_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pofcap_fitter_free(fitter: *mut PofcapFitter) {
    if !fitter.is_null() {
        drop(Box::from_raw(fitter));
    }
}

/// Fit one frame of `seq` from scratch.
///
/// # Safety
/// `fitter` and `seq` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pofcap_fit_frame(
    fitter: *const PofcapFitter,
    seq: *const PofcapSequence,
    frame: usize,
    out: *mut *mut PofcapFitResult,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let fitter = handle(fitter, "fitter")?;
        let seq = handle(seq, "seq")?;
        if frame >= seq.inner.len() {
            return Err((POFCAP_ERR_ARGUMENT, format!("frame {frame} out of range")));
        }
        let obs = seq.inner.observation(frame).map_err(lib)?;
        let inner = fitter.inner.fit_frame(&obs, None).map_err(lib)?;
        let joints = fitter
            .inner
            .model
            .pose(&inner.params)
            .map_err(lib)?
            .positions
            .iter()
            .map(|p| [p.x, p.y, p.z])
            .collect();
        *out = Box::into_raw(Box::new(PofcapFitResult { inner, joints }));
        Ok(())
    })
}

/// Final objective value, or NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pofcap_result_cost(result: *const PofcapFitResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.cost)
}

/// Whether the solver converged: 1, 0, or -1 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pofcap_result_converged(result: *const PofcapFitResult) -> i32 {
    result.as_ref().map_or(-1, |r| r.inner.converged as i32)
}

/// Number of joints, or 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pofcap_result_joint_count(result: *const PofcapFitResult) -> usize {
    result.as_ref().map_or(0, |r| r.joints.len())
}

/// Copy fitted joints as `x, y, z` triples (cm).
///
/// # Safety
/// `result` must be a live handle; `xyz` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn pofcap_result_joints(
    result: *const PofcapFitResult,
    xyz: *mut f64,
    capacity: usize,
) -> i32 {
    guard(|| copy_joints(&handle(result, "result")?.joints, xyz, capacity))
}

/// Fitted parameters as JSON; release with `pofcap_string_free`.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pofcap_result_params_json(
    result: *const PofcapFitResult,
    out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let json = serde_json::to_string(&handle(result, "result")?.inner.params)
            .map_err(|e| lib(e.into()))?;
        *out = CString::new(json)
            .map_err(|e| (POFCAP_ERR_FORMAT, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle from `pofcap_fit_frame`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pofcap_result_free(result: *mut PofcapFitResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pofcap_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Mean per-joint position error between two `x, y, z` arrays of `joints`
/// points, optionally after aligning joint `root`.
///
/// # Safety
/// `pred` and `gt` must hold `3 * joints` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pofcap_mpjpe(
    pred: *const f64,
    gt: *const f64,
    joints: usize,
    root: usize,
    align_root: bool,
    out: *mut f64,
) -> i32 {
    guard(|| {
        if pred.is_null() || gt.is_null() || out.is_null() {
            return Err(null("pred, gt or out"));
        }
        let points = |p: *const f64| {
            std::slice::from_raw_parts(p, 3 * joints)
                .chunks_exact(3)
                .map(|c| nalgebra::Vector3::new(c[0], c[1], c[2]))
                .collect::<Vec<_>>()
        };
        let alignment = if align_root {
            Alignment::Root
        } else {
            Alignment::None
        };
        *out = eval::mpjpe(&points(pred), &points(gt), alignment, root).map_err(lib)?;
        Ok(())
    })
}

unsafe fn copy_joints(
    joints: &[[f64; 3]],
    xyz: *mut f64,
    capacity: usize,
) -> Result<(), (i32, String)> {
    if xyz.is_null() {
        return Err(null("xyz"));
    }
    let need = 3 * joints.len();
    if capacity < need {
        return Err((
            POFCAP_ERR_ARGUMENT,
            format!("buffer holds {capacity} doubles, {need} needed"),
        ));
    }
    let dst = std::slice::from_raw_parts_mut(xyz, need);
    for (d, j) in dst.chunks_exact_mut(3).zip(joints) {
        d.copy_from_slice(j);
    }
    Ok(())
}
