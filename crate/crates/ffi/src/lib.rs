//! C ABI over the marginflow library.
//!
//! Every fallible function returns an [`MfStatus`]. On failure the message
//! is kept per thread and can be read with [`mf_last_error_message`].
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use marginflow::harness::{read_json, run_experiment, ExperimentConfig, RunOptions, RunSummary, SUMMARY_FILE};
use marginflow::kkt::svm_oracle;
use marginflow::model::Dataset;
use marginflow::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed config, dataset or argument.
    Config = 3,
    /// Non-finite values, stiffness, or a degenerate computation.
    Numeric = 4,
    /// The training data are not separable.
    Assumption = 5,
    Io = 6,
    Panic = 7,
    /// The output buffer was too short; the required length was still written.
    BufferTooSmall = 8,
}

impl From<&Error> for MfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Dimension { .. } | Error::Dataset(_) | Error::Parse(_) => MfStatus::Config,
            Error::Io { .. } => MfStatus::Io,
            Error::NotSeparated(_) | Error::Assumption(_) => MfStatus::Assumption,
            Error::NumericFailure { .. }
            | Error::Stiffness { .. }
            | Error::Domain(_)
            | Error::Degenerate(_)
            | Error::NoSolution(_)
            | Error::ContractViolation(_) => MfStatus::Numeric,
        }
    }
}

/// A parsed and validated experiment config.
pub struct MfConfig(ExperimentConfig);

/// The summary and final parameters of one run.
pub struct MfRunResult {
    summary: RunSummary,
    summary_json: CString,
}

/// Labelled training points.
pub struct MfDataset(Dataset);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: MfStatus, msg: impl Into<String>) -> MfStatus {
    set_error(msg);
    status
}

fn fail_with(e: &Error) -> MfStatus {
    fail(e.into(), e.to_string())
}

/// Runs `f` with the error slot cleared, converting panics to [`MfStatus::Panic`].
fn guard(f: impl FnOnce() -> MfStatus) -> MfStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(MfStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, MfStatus> {
    if p.is_null() {
        return Err(fail(MfStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MfStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Nulls `*out` so failed calls never leave a stale handle behind.
unsafe fn check_out<T>(out: *mut *mut T, name: &str) -> Result<(), MfStatus> {
    if out.is_null() {
        return Err(fail(MfStatus::NullPointer, format!("{name} is null")));
    }
    *out = ptr::null_mut();
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next `mf_*` call on the same thread.
#[no_mangle]
pub extern "C" fn mf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a TOML config. `base_dir` (nullable) resolves relative CSV paths.
///
/// # Safety
/// `toml` and `base_dir` must be null or NUL-terminated strings; `out` must
/// be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mf_config_from_toml(
    toml: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut MfConfig,
) -> MfStatus {
    guard(|| {
        try_ffi!(check_out(out, "out"));
        let text = try_ffi!(str_arg(toml, "toml"));
        let base = if base_dir.is_null() { None } else { Some(PathBuf::from(try_ffi!(str_arg(base_dir, "base_dir")))) };
        match ExperimentConfig::from_toml_str(text) {
            Ok(mut cfg) => {
                cfg.base_dir = base;
                *out = Box::into_raw(Box::new(MfConfig(cfg)));
                MfStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// # Safety
/// `cfg` must be null or a handle from [`mf_config_from_toml`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_config_free(cfg: *mut MfConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs an experiment, writing its files to `out_dir`. A negative
/// `max_steps` keeps the config's budget.
///
/// On a numeric failure the partial summary is still returned through
/// `out` together with [`MfStatus::Numeric`].
///
/// # Safety
/// `cfg` must be a live handle, `out_dir` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mf_run(
    cfg: *const MfConfig,
    out_dir: *const c_char,
    max_steps: i64,
    out: *mut *mut MfRunResult,
) -> MfStatus {
    guard(|| {
        try_ffi!(check_out(out, "out"));
        if cfg.is_null() {
            return fail(MfStatus::NullPointer, "cfg is null");
        }
        let dir = PathBuf::from(try_ffi!(str_arg(out_dir, "out_dir")));
        let opts = RunOptions {
            out_dir: Some(dir.clone()),
            max_steps: u64::try_from(max_steps).ok(),
            ..Default::default()
        };
        match run_experiment(&(*cfg).0, &opts) {
            Ok(run) => {
                *out = try_ffi!(result_handle(run.summary));
                MfStatus::Ok
            }
            Err(e @ (Error::NumericFailure { .. } | Error::Stiffness { .. })) => {
                if let Ok(summary) = read_json::<RunSummary>(&dir.join(SUMMARY_FILE)) {
                    *out = try_ffi!(result_handle(summary));
                }
                fail_with(&e)
            }
            Err(e) => fail_with(&e),
        }
    })
}

fn result_handle(summary: RunSummary) -> Result<*mut MfRunResult, MfStatus> {
    let json = serde_json::to_string(&summary).map_err(|e| fail(MfStatus::Io, e.to_string()))?;
    let summary_json = CString::new(json).map_err(|e| fail(MfStatus::Io, e.to_string()))?;
    Ok(Box::into_raw(Box::new(MfRunResult { summary, summary_json })))
}

/// # Safety
/// `run` must be null or a handle from [`mf_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_run_free(run: *mut MfRunResult) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Copies the run summary as JSON into a new string owned by the caller,
/// released with [`mf_string_free`].
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mf_run_summary_json(run: *const MfRunResult, out: *mut *mut c_char) -> MfStatus {
    guard(|| {
        try_ffi!(check_out(out, "out"));
        if run.is_null() {
            return fail(MfStatus::NullPointer, "run is null");
        }
        *out = (*run).summary_json.clone().into_raw();
        MfStatus::Ok
    })
}

/// Writes the final parameters into `buf` (capacity `cap`) and their count
/// into `len`. Returns [`MfStatus::BufferTooSmall`] when `cap < *len`.
///
/// # Safety
/// `run` must be a live handle, `len` writable and `buf` valid for `cap`
/// doubles (it may be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn mf_run_final_params(
    run: *const MfRunResult,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> MfStatus {
    guard(|| {
        if run.is_null() || len.is_null() {
            return fail(MfStatus::NullPointer, "run or len is null");
        }
        let w = &(*run).summary.final_params;
        *len = w.len();
        copy_out(w, buf, cap)
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, cap: usize) -> MfStatus {
    if cap < src.len() {
        return fail(MfStatus::BufferTooSmall, format!("need {} values, buffer holds {cap}", src.len()));
    }
    if buf.is_null() {
        return fail(MfStatus::NullPointer, "buf is null");
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    MfStatus::Ok
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from [`mf_run_summary_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a dataset from `n` row-major points of dimension `d` and their
/// labels in {-1, 1}.
///
/// # Safety
/// `xs` must hold `n * d` doubles, `ys` `n` doubles, and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_dataset_new(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    d: usize,
    out: *mut *mut MfDataset,
) -> MfStatus {
    guard(|| {
        try_ffi!(check_out(out, "out"));
        if xs.is_null() || ys.is_null() {
            return fail(MfStatus::NullPointer, "xs or ys is null");
        }
        let Some(total) = n.checked_mul(d) else { return fail(MfStatus::Config, "n * d overflows") };
        let flat = std::slice::from_raw_parts(xs, total);
        let rows = if d == 0 { vec![Vec::new(); n] } else { flat.chunks(d).map(<[f64]>::to_vec).collect() };
        let labels = std::slice::from_raw_parts(ys, n).to_vec();
        match Dataset::new(rows, labels) {
            Ok(data) => {
                *out = Box::into_raw(Box::new(MfDataset(data)));
                MfStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// # Safety
/// `data` must be null or a handle from [`mf_dataset_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_dataset_free(data: *mut MfDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Solves `min 1/2 ||s * w||^2  s.t.  y_i <w, x_i> >= 1` exactly. `scaling`
/// (nullable, `d` values) defaults to all ones. Writes `w*` into `w_out`
/// (capacity `cap`) and, when `margin_out` is non-null, the margin
/// `1 / ||s * w*||`.
///
/// # Safety
/// `data` must be a live handle, `scaling` null or valid for `d` doubles,
/// `w_out` valid for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_svm_oracle(
    data: *const MfDataset,
    scaling: *const f64,
    w_out: *mut f64,
    cap: usize,
    margin_out: *mut f64,
) -> MfStatus {
    guard(|| {
        if data.is_null() {
            return fail(MfStatus::NullPointer, "data is null");
        }
        let data = &(*data).0;
        let d = data.dim();
        let s = if scaling.is_null() { vec![1.0; d] } else { std::slice::from_raw_parts(scaling, d).to_vec() };
        match svm_oracle(data, &s) {
            Ok(sol) => {
                let status = copy_out(&sol.w_star, w_out, cap);
                if status == MfStatus::Ok && !margin_out.is_null() {
                    *margin_out = 1.0 / (2.0 * sol.objective).sqrt();
                }
                status
            }
            Err(e) => fail_with(&e),
        }
    })
}
