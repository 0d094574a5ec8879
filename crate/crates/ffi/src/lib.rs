//! C ABI over the `blowup` crate.
//!
//! Every function returns a [`BlowupStatus`]; on failure the message is kept
//! per thread and read with [`blowup_last_error`]. Handles are opaque and
//! released with their `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use blowup::cli::verify::{verify, VerifyOptions};
use blowup::cli::{load_grid_field, run, RunConfig, RunReport};
use blowup::dynamics::{compute_b, compute_series, IntegrationSpec, ScaleGrid, ScaleSeries, SeriesOptions};
use blowup::fields::{build_synthetic, rescale, PatchConfig, SolutionField};
use blowup::harmonics::{gram_constant, kappa, Projector};
use blowup::solver::{fixed_point_solve, SolverConfig};
use blowup::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlowupStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Domain = 5,
    Mode = 6,
    SolverFailure = 7,
    InsufficientSeries = 8,
    Io = 9,
    Internal = 10,
    Panic = 11,
    /// The call completed but hard checks failed (run and verify only).
    ChecksFailed = 12,
}

/// A solution field: synthetic, solved on the grid, or loaded from a snapshot.
pub struct BlowupField {
    inner: Arc<dyn SolutionField>,
}

/// A scale series with its moment records.
pub struct BlowupSeries {
    inner: ScaleSeries,
}

/// Output of a full run; owns its JSON text.
pub struct BlowupReport {
    inner: RunReport,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(err: &Error) -> BlowupStatus {
    match err {
        Error::InvalidDimension(_) | Error::InvalidIndex { .. } | Error::InvalidArgument(_) => {
            BlowupStatus::InvalidArgument
        }
        Error::Data(_) => BlowupStatus::Data,
        Error::Internal(_) => BlowupStatus::Internal,
        Error::Config { .. } => BlowupStatus::Config,
        Error::Domain(_) => BlowupStatus::Domain,
        Error::SolverFailure { .. } => BlowupStatus::SolverFailure,
        Error::Mode(_) => BlowupStatus::Mode,
        Error::InsufficientSeries(_) => BlowupStatus::InsufficientSeries,
        Error::Io(_) => BlowupStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
    Checks(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> BlowupStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => BlowupStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            BlowupStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Checks(msg))) => {
            set_error(msg);
            BlowupStatus::ChecksFailed
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BlowupStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn json_error(e: serde_json::Error) -> Failure {
    Failure::Lib(Error::config(format!("line {} column {}: {e}", e.line(), e.column())))
}

/// Message of the last failed call on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn blowup_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// `c_n = |∂B₁|/(2n(n+2))`.
///
/// # Safety
/// `out_value` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_gram_constant(n: usize, out_value: *mut f64) -> BlowupStatus {
    guard(|| {
        *out(out_value, "out_value")? = gram_constant(n)?;
        Ok(())
    })
}

/// `κ_n = n(n+2)/|∂B₁|`.
///
/// # Safety
/// `out_value` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_kappa(n: usize, out_value: *mut f64) -> BlowupStatus {
    guard(|| {
        *out(out_value, "out_value")? = kappa(n)?;
        Ok(())
    })
}

fn boxed_field(inner: Arc<dyn SolutionField>) -> *mut BlowupField {
    Box::into_raw(Box::new(BlowupField { inner }))
}

/// Builds a synthetic field from patch-config JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_field` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_field_synthetic(json: *const c_char, out_field: *mut *mut BlowupField) -> BlowupStatus {
    guard(|| {
        let slot = out(out_field, "out_field")?;
        *slot = ptr::null_mut();
        let cfg = PatchConfig::from_json(text(json, "json")?)?;
        *slot = boxed_field(Arc::new(build_synthetic(cfg)?));
        Ok(())
    })
}

/// Runs the grid solver from solver-config JSON. A non-converged fixed
/// point still returns a field; `out_converged` reports it.
///
/// # Safety
/// `json` must be a NUL-terminated string; the out pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_field_solve(
    json: *const c_char,
    out_field: *mut *mut BlowupField,
    out_converged: *mut bool,
) -> BlowupStatus {
    guard(|| {
        let slot = out(out_field, "out_field")?;
        *slot = ptr::null_mut();
        let converged = out(out_converged, "out_converged")?;
        let cfg: SolverConfig = serde_json::from_str(text(json, "json")?).map_err(json_error)?;
        let sol = fixed_point_solve(&cfg)?;
        *converged = sol.converged();
        *slot = boxed_field(Arc::new(sol.field().clone()));
        Ok(())
    })
}

/// Loads `<base>.bin` and `<base>.mask.bin`.
///
/// # Safety
/// `base` must be a NUL-terminated path; `out_field` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_field_load_snapshot(
    base: *const c_char,
    out_field: *mut *mut BlowupField,
) -> BlowupStatus {
    guard(|| {
        let slot = out(out_field, "out_field")?;
        *slot = ptr::null_mut();
        let field = load_grid_field(&PathBuf::from(text(base, "base")?))?;
        *slot = boxed_field(Arc::new(field));
        Ok(())
    })
}

/// Releases a field; null is ignored.
///
/// # Safety
/// `field` must come from a `blowup_field_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn blowup_field_free(field: *mut BlowupField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// # Safety
/// `field` must be a live handle; `out_n` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_field_dimension(field: *const BlowupField, out_n: *mut usize) -> BlowupStatus {
    guard(|| {
        *out(out_n, "out_n")? = handle(field, "field")?.inner.dimension();
        Ok(())
    })
}

/// `u(x)` at a point of `dimension` coordinates.
///
/// # Safety
/// `x` must hold `dimension` values; `out_value` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_field_value(
    field: *const BlowupField,
    x: *const f64,
    out_value: *mut f64,
) -> BlowupStatus {
    guard(|| {
        let f = &handle(field, "field")?.inner;
        let x = slice(x, f.dimension(), "x")?;
        *out(out_value, "out_value")? = f.value(x)?;
        Ok(())
    })
}

/// `∇u(x)` into `out_gradient` (`dimension` values).
///
/// # Safety
/// `x` and `out_gradient` must hold `dimension` values.
#[no_mangle]
pub unsafe extern "C" fn blowup_field_gradient(
    field: *const BlowupField,
    x: *const f64,
    out_gradient: *mut f64,
) -> BlowupStatus {
    guard(|| {
        let f = &handle(field, "field")?.inner;
        let n = f.dimension();
        let x = slice(x, n, "x")?;
        f.gradient(x, slice_mut(out_gradient, n, "out_gradient")?)?;
        Ok(())
    })
}

/// Whether `x` lies in the inactive set.
///
/// # Safety
/// `x` must hold `dimension` values; `out_inactive` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_field_inactive(
    field: *const BlowupField,
    x: *const f64,
    out_inactive: *mut bool,
) -> BlowupStatus {
    guard(|| {
        let f = &handle(field, "field")?.inner;
        let x = slice(x, f.dimension(), "x")?;
        *out(out_inactive, "out_inactive")? = f.inactive(x)?;
        Ok(())
    })
}

/// `B(t)` of the rescaled field as the dense row-major `n×n` matrix, with the
/// default sphere rule.
///
/// # Safety
/// `out_b` must hold `dimension²` values.
#[no_mangle]
pub unsafe extern "C" fn blowup_field_projection(
    field: *const BlowupField,
    t: f64,
    out_b: *mut f64,
) -> BlowupStatus {
    guard(|| {
        let f = &handle(field, "field")?.inner;
        let n = f.dimension();
        let dst = slice_mut(out_b, n * n, "out_b")?;
        let projector = Projector::for_dimension(n)?;
        let (b, _) = compute_b(&rescale(f.clone(), t)?, &projector)?;
        dst.copy_from_slice(&b.to_dense());
        Ok(())
    })
}

/// Computes the moment series on `steps + 1` uniform scales of
/// `[t_start, t_end]`. `samples == 0` selects closed-form moments (falling
/// back to sampling where the field has none); otherwise sampled moments
/// with `seed`.
///
/// # Safety
/// `field` must be a live handle; `out_series` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_series_compute(
    field: *const BlowupField,
    t_start: f64,
    t_end: f64,
    steps: usize,
    k_max: usize,
    samples: usize,
    seed: u64,
    out_series: *mut *mut BlowupSeries,
) -> BlowupStatus {
    guard(|| {
        let slot = out(out_series, "out_series")?;
        *slot = ptr::null_mut();
        let f = &handle(field, "field")?.inner;
        let spec = if samples == 0 {
            IntegrationSpec::ClosedForm
        } else {
            IntegrationSpec::Sampled {
                samples_per_region: samples,
                seed,
            }
        };
        let options = SeriesOptions::new(f.dimension(), spec, k_max)?;
        let grid = ScaleGrid::uniform(t_start, t_end, steps + 1)?;
        let inner = compute_series(f.clone(), &grid, &options)?;
        *slot = Box::into_raw(Box::new(BlowupSeries { inner }));
        Ok(())
    })
}

/// # Safety
/// `series` must come from [`blowup_series_compute`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn blowup_series_free(series: *mut BlowupSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// # Safety
/// `series` must be a live handle; `out_len` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_series_len(series: *const BlowupSeries, out_len: *mut usize) -> BlowupStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(series, "series")?.inner.len();
        Ok(())
    })
}

/// Scalars of record `index`: `t, F, F₀, I, I₀, ε` in that order.
///
/// # Safety
/// `out_values` must hold 6 values.
#[no_mangle]
pub unsafe extern "C" fn blowup_series_scalars(
    series: *const BlowupSeries,
    index: usize,
    out_values: *mut f64,
) -> BlowupStatus {
    guard(|| {
        let s = &handle(series, "series")?.inner;
        let r = s.records.get(index).ok_or(Error::InvalidIndex {
            index,
            dim: s.len(),
        })?;
        slice_mut(out_values, 6, "out_values")?.copy_from_slice(&[r.t, r.f, r.f0(), r.i, r.i0(), r.eps]);
        Ok(())
    })
}

/// `B` of record `index`, dense row-major `n×n`.
///
/// # Safety
/// `out_b` must hold `dimension²` values.
#[no_mangle]
pub unsafe extern "C" fn blowup_series_b(series: *const BlowupSeries, index: usize, out_b: *mut f64) -> BlowupStatus {
    guard(|| {
        let s = &handle(series, "series")?.inner;
        let r = s.records.get(index).ok_or(Error::InvalidIndex {
            index,
            dim: s.len(),
        })?;
        let n = s.dimension;
        slice_mut(out_b, n * n, "out_b")?.copy_from_slice(&r.b.to_dense());
        Ok(())
    })
}

/// Runs a JSON run config end to end and writes its outputs. The report is
/// returned even when hard checks fail; the status is then
/// `ChecksFailed`.
///
/// # Safety
/// `json` must be NUL-terminated; `out_report` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_run(json: *const c_char, out_report: *mut *mut BlowupReport) -> BlowupStatus {
    guard(|| {
        let slot = out(out_report, "out_report")?;
        *slot = ptr::null_mut();
        let cfg = RunConfig::from_json(text(json, "json")?)?;
        let inner = run(&cfg)?;
        let json = serde_json::to_string_pretty(&inner).map_err(|e| Error::Internal(e.to_string()))?;
        let passed = inner.passed;
        let failures: Vec<String> = inner.failures().iter().map(|c| c.anchor.clone()).collect();
        *slot = Box::into_raw(Box::new(BlowupReport {
            inner,
            json: CString::new(json).map_err(|e| Error::Internal(e.to_string()))?,
        }));
        if passed {
            Ok(())
        } else {
            Err(Failure::Checks(format!("hard check failures: {}", failures.join(", "))))
        }
    })
}

/// # Safety
/// `report` must be a live handle; `out_passed` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_report_passed(report: *const BlowupReport, out_passed: *mut bool) -> BlowupStatus {
    guard(|| {
        *out(out_passed, "out_passed")? = handle(report, "report")?.inner.passed;
        Ok(())
    })
}

/// The report as JSON; owned by the handle.
///
/// # Safety
/// `report` must be a live handle; `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_report_json(report: *const BlowupReport, out_json: *mut *const c_char) -> BlowupStatus {
    guard(|| {
        *out(out_json, "out_json")? = handle(report, "report")?.json.as_ptr();
        Ok(())
    })
}

/// # Safety
/// `report` must come from [`blowup_run`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn blowup_report_free(report: *mut BlowupReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Runs the bundled acceptance matrix into `out_dir`.
///
/// # Safety
/// `out_dir` must be NUL-terminated; `out_passed` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn blowup_verify(out_dir: *const c_char, out_passed: *mut bool) -> BlowupStatus {
    guard(|| {
        let passed = out(out_passed, "out_passed")?;
        let report = verify(&PathBuf::from(text(out_dir, "out_dir")?), &VerifyOptions::default())?;
        *passed = report.passed;
        if report.passed {
            Ok(())
        } else {
            Err(Failure::Checks("verify: hard check failures".into()))
        }
    })
}
