//! C ABI over the coefficient calculus.
//!
//! Coefficient arrays live behind an opaque `QsCoeffBlock` handle. Every
//! fallible call returns a `QsStatus`; on failure `qs_last_error` returns a
//! message for the calling thread. Matrices cross the boundary as row-major
//! interleaved `(re, im)` doubles, `2·d·d` values per block.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qstoch::coeff_file::{CoeffFile, FileError, Representation};
use qstoch::coeffs::{
    check_ito_unitarity_tol, check_strat_selfadjoint_tol, ito_to_strat, strat_to_ito, CoeffError,
    CoefficientBlock, ConversionReport, GaugeParameter,
};
use qstoch::linalg::{c, Mat};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad dimension, index or buffer length.
    InvalidArgument = 2,
    /// Gauge parameter off the line `Re κ = 1/2`.
    InvalidGauge = 3,
    /// A resolvent or factor is numerically singular.
    Singular = 4,
    /// Malformed JSON or schema violation.
    Parse = 5,
    Panic = 99,
}

/// Opaque coefficient array.
pub struct QsCoeffBlock {
    inner: CoefficientBlock,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: QsStatus, msg: impl Into<String>) -> QsStatus {
    set_error(msg.into());
    status
}

fn coeff_status(e: CoeffError) -> QsStatus {
    let status = match e {
        CoeffError::InvalidGauge { .. } => QsStatus::InvalidGauge,
        CoeffError::SingularResolvent { .. } | CoeffError::SingularFactor { .. } => QsStatus::Singular,
        _ => QsStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> QsStatus) -> QsStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(QsStatus::Panic, "internal panic"))
}

fn gauge(re: f64, im: f64) -> Result<GaugeParameter, QsStatus> {
    GaugeParameter::new(c(re, im)).map_err(coeff_status)
}

unsafe fn handle<'a>(h: *const QsCoeffBlock) -> Result<&'a QsCoeffBlock, QsStatus> {
    h.as_ref().ok_or_else(|| fail(QsStatus::NullPointer, "null handle"))
}

fn boxed(inner: CoefficientBlock) -> *mut QsCoeffBlock {
    Box::into_raw(Box::new(QsCoeffBlock { inner }))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Allocates a zero coefficient array with `(channels + 1)²` blocks of size `dim`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn qs_coeff_new(dim: usize, channels: usize, out: *mut *mut QsCoeffBlock) -> QsStatus {
    guard(|| {
        if out.is_null() {
            return fail(QsStatus::NullPointer, "null output pointer");
        }
        match CoefficientBlock::zeros(dim, channels) {
            Ok(b) => {
                *out = boxed(b);
                QsStatus::Ok
            }
            Err(e) => coeff_status(e),
        }
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `h` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qs_coeff_free(h: *mut QsCoeffBlock) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Block dimension, or 0 for NULL.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qs_coeff_dim(h: *const QsCoeffBlock) -> usize {
    h.as_ref().map_or(0, |b| b.inner.dim())
}

/// Number of noise channels, or 0 for NULL.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qs_coeff_channels(h: *const QsCoeffBlock) -> usize {
    h.as_ref().map_or(0, |b| b.inner.channels())
}

/// Overwrites block `(alpha, beta)` from `len = 2·d·d` interleaved doubles.
///
/// # Safety
/// `h` must be a live handle and `data` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn qs_coeff_set_block(
    h: *mut QsCoeffBlock,
    alpha: usize,
    beta: usize,
    data: *const f64,
    len: usize,
) -> QsStatus {
    guard(|| {
        let Some(b) = h.as_mut() else {
            return fail(QsStatus::NullPointer, "null handle");
        };
        if data.is_null() {
            return fail(QsStatus::NullPointer, "null data");
        }
        let (d, n) = (b.inner.dim(), b.inner.size());
        if alpha >= n || beta >= n {
            return fail(QsStatus::InvalidArgument, format!("index ({alpha}, {beta}) out of range"));
        }
        if len != 2 * d * d {
            return fail(QsStatus::InvalidArgument, format!("expected {} doubles, got {len}", 2 * d * d));
        }
        let xs = std::slice::from_raw_parts(data, len);
        let m = Mat::from_fn(d, d, |i, j| c(xs[2 * (i * d + j)], xs[2 * (i * d + j) + 1]));
        match b.inner.set(alpha, beta, m) {
            Ok(()) => QsStatus::Ok,
            Err(e) => coeff_status(e),
        }
    })
}

/// Copies block `(alpha, beta)` into `out` as `len = 2·d·d` interleaved doubles.
///
/// # Safety
/// `h` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qs_coeff_get_block(
    h: *const QsCoeffBlock,
    alpha: usize,
    beta: usize,
    out: *mut f64,
    len: usize,
) -> QsStatus {
    guard(|| {
        let b = tri!(handle(h));
        if out.is_null() {
            return fail(QsStatus::NullPointer, "null output buffer");
        }
        let (d, n) = (b.inner.dim(), b.inner.size());
        if alpha >= n || beta >= n {
            return fail(QsStatus::InvalidArgument, format!("index ({alpha}, {beta}) out of range"));
        }
        if len != 2 * d * d {
            return fail(QsStatus::InvalidArgument, format!("expected {} doubles, got {len}", 2 * d * d));
        }
        let xs = std::slice::from_raw_parts_mut(out, len);
        let m = b.inner.block(alpha, beta);
        for i in 0..d {
            for j in 0..d {
                xs[2 * (i * d + j)] = m[(i, j)].re;
                xs[2 * (i * d + j) + 1] = m[(i, j)].im;
            }
        }
        QsStatus::Ok
    })
}

unsafe fn convert(
    h: *const QsCoeffBlock,
    kappa_re: f64,
    kappa_im: f64,
    out: *mut *mut QsCoeffBlock,
    f: fn(&CoefficientBlock, GaugeParameter) -> Result<CoefficientBlock, CoeffError>,
) -> QsStatus {
    guard(|| {
        let b = tri!(handle(h));
        if out.is_null() {
            return fail(QsStatus::NullPointer, "null output pointer");
        }
        let k = tri!(gauge(kappa_re, kappa_im));
        match f(&b.inner, k) {
            Ok(r) => {
                *out = boxed(r);
                QsStatus::Ok
            }
            Err(e) => coeff_status(e),
        }
    })
}

/// Stratonovich coefficients to Itô coefficients; allocates `*out`.
///
/// # Safety
/// `e` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_strat_to_ito(
    e: *const QsCoeffBlock,
    kappa_re: f64,
    kappa_im: f64,
    out: *mut *mut QsCoeffBlock,
) -> QsStatus {
    convert(e, kappa_re, kappa_im, out, strat_to_ito)
}

/// Itô coefficients to Stratonovich coefficients; allocates `*out`.
///
/// # Safety
/// `g` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_ito_to_strat(
    g: *const QsCoeffBlock,
    kappa_re: f64,
    kappa_im: f64,
    out: *mut *mut QsCoeffBlock,
) -> QsStatus {
    convert(g, kappa_re, kappa_im, out, ito_to_strat)
}

unsafe fn run_check(
    h: *const QsCoeffBlock,
    tol: f64,
    max_residual: *mut f64,
    passed: *mut bool,
    f: fn(&CoefficientBlock, f64) -> ConversionReport,
) -> QsStatus {
    guard(|| {
        let b = tri!(handle(h));
        if max_residual.is_null() || passed.is_null() {
            return fail(QsStatus::NullPointer, "null output pointer");
        }
        if !(tol > 0.0) {
            return fail(QsStatus::InvalidArgument, format!("tolerance must be positive, got {tol}"));
        }
        let rep = f(&b.inner, tol);
        *max_residual = rep.max_residual();
        *passed = rep.passed;
        QsStatus::Ok
    })
}

/// Itô unitarity conditions; writes the largest residual and the verdict.
///
/// # Safety
/// `g` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_check_ito_unitarity(
    g: *const QsCoeffBlock,
    tol: f64,
    max_residual: *mut f64,
    passed: *mut bool,
) -> QsStatus {
    run_check(g, tol, max_residual, passed, check_ito_unitarity_tol)
}

/// Stratonovich self-adjointness `E_{αβ}† = E_{βα}`.
///
/// # Safety
/// `e` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_check_strat_selfadjoint(
    e: *const QsCoeffBlock,
    tol: f64,
    max_residual: *mut f64,
    passed: *mut bool,
) -> QsStatus {
    run_check(e, tol, max_residual, passed, check_strat_selfadjoint_tol)
}

/// Parses a coefficient-file document. `is_ito`, `kappa_re` and `kappa_im`
/// receive the representation and gauge stored in the file.
///
/// # Safety
/// `json` must be a NUL-terminated string; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_coeff_from_json(
    json: *const c_char,
    out: *mut *mut QsCoeffBlock,
    is_ito: *mut bool,
    kappa_re: *mut f64,
    kappa_im: *mut f64,
) -> QsStatus {
    guard(|| {
        if json.is_null() || out.is_null() || is_ito.is_null() || kappa_re.is_null() || kappa_im.is_null() {
            return fail(QsStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            return fail(QsStatus::Parse, "input is not UTF-8");
        };
        let file = match CoeffFile::from_str_at(text, Path::new("<json>")) {
            Ok(f) => f,
            Err(e @ (FileError::Parse { .. } | FileError::Schema { .. } | FileError::Io { .. })) => {
                return fail(QsStatus::Parse, e.to_string())
            }
        };
        if file.is_super {
            return fail(QsStatus::InvalidArgument, "superoperator files are not supported here");
        }
        let k = file.kappa.value();
        *is_ito = file.representation == Representation::Ito;
        *kappa_re = k.re;
        *kappa_im = k.im;
        *out = boxed(file.coefficients);
        QsStatus::Ok
    })
}

/// Serializes a handle as a coefficient-file document. Free the string with
/// `qs_string_free`.
///
/// # Safety
/// `h` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qs_coeff_to_json(
    h: *const QsCoeffBlock,
    is_ito: bool,
    kappa_re: f64,
    kappa_im: f64,
    out: *mut *mut c_char,
) -> QsStatus {
    guard(|| {
        let b = tri!(handle(h));
        if out.is_null() {
            return fail(QsStatus::NullPointer, "null output pointer");
        }
        let k = tri!(gauge(kappa_re, kappa_im));
        let rep = if is_ito {
            Representation::Ito
        } else {
            Representation::Stratonovich
        };
        let text = CoeffFile::new(rep, k, b.inner.clone()).to_string_pretty();
        *out = CString::new(text).expect("JSON has no NUL bytes").into_raw();
        QsStatus::Ok
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from `qs_coeff_to_json` and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
