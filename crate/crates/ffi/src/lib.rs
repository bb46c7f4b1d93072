//! C interface to the async-admm solver.
//!
//! Every fallible call returns an [`AdmmCode`]; on failure the message is
//! available from [`admm_last_error`] until the next call on the same
//! thread. Handles are opaque and released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use async_admm::analysis::{analyze, parameter_bounds, AnalysisInputs, DiagnosticConstants};
use async_admm::config::{Assignments, RunConfig};
use async_admm::io::read_trace;
use async_admm::runner::{execute, Execution};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmmCode {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Run = 4,
    Io = 5,
    Analysis = 6,
    OutOfRange = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// How a finished run ended.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmmRunStatus {
    Converged = 0,
    SolverFailure = 1,
    IterationCap = 2,
    TimeCap = 3,
}

/// Run configuration being assembled.
pub struct AdmmConfig {
    assignments: Assignments,
}

/// A finished run.
pub struct AdmmRun {
    execution: Execution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn guard(f: impl FnOnce() -> Result<(), (AdmmCode, String)>) -> AdmmCode {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdmmCode::Ok,
        Ok(Err((code, message))) => {
            set_error(message);
            code
        }
        Err(_) => {
            set_error("internal panic");
            AdmmCode::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, (AdmmCode, String)> {
    if p.is_null() {
        return Err((AdmmCode::NullPointer, "null string".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (AdmmCode::InvalidUtf8, "string is not valid UTF-8".into()))
}

fn null(what: &str) -> (AdmmCode, String) {
    (AdmmCode::NullPointer, format!("null {what}"))
}

fn to_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library; valid until the next call.
#[no_mangle]
pub extern "C" fn admm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses config text in the key-value grammar.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn admm_config_parse(source: *const c_char, out: *mut *mut AdmmConfig) -> AdmmCode {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let assignments =
            Assignments::parse(text(source)?, "config", None).map_err(|e| (AdmmCode::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(AdmmConfig { assignments }));
        Ok(())
    })
}

/// Reads a config file; relative paths in it resolve against its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn admm_config_read(path: *const c_char, out: *mut *mut AdmmConfig) -> AdmmCode {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let assignments = Assignments::read(Path::new(text(path)?)).map_err(|e| (AdmmCode::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(AdmmConfig { assignments }));
        Ok(())
    })
}

/// Applies one `key=value` override.
///
/// # Safety
/// `config` must come from this library; `assignment` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn admm_config_set(config: *mut AdmmConfig, assignment: *const c_char) -> AdmmCode {
    guard(|| {
        let config = config.as_mut().ok_or_else(|| null("config"))?;
        config
            .assignments
            .set(text(assignment)?)
            .map_err(|e| (AdmmCode::Config, e.to_string()))
    })
}

/// # Safety
/// `config` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn admm_config_free(config: *mut AdmmConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the configuration and writes its artifacts to the configured
/// output directory. A run that stops at a cap or on a solver failure still
/// returns a handle; inspect it with [`admm_run_status`].
///
/// # Safety
/// `config` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn admm_run(config: *const AdmmConfig, out: *mut *mut AdmmRun) -> AdmmCode {
    guard(|| {
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let cfg: RunConfig = config
            .assignments
            .clone()
            .into_config()
            .map_err(|e| (AdmmCode::Config, e.to_string()))?;
        let execution = execute(&cfg).map_err(|e| (AdmmCode::Run, e.to_string()))?;
        *out = Box::into_raw(Box::new(AdmmRun { execution }));
        Ok(())
    })
}

/// # Safety
/// `run` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn admm_run_free(run: *mut AdmmRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `run` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn admm_run_status(run: *const AdmmRun, out: *mut AdmmRunStatus) -> AdmmCode {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *out = match run.execution.outcome.status.label() {
            "converged" => AdmmRunStatus::Converged,
            "iteration_cap" => AdmmRunStatus::IterationCap,
            "time_cap" => AdmmRunStatus::TimeCap,
            _ => AdmmRunStatus::SolverFailure,
        };
        Ok(())
    })
}

/// Scalar results of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AdmmRunStats {
    pub workers: usize,
    pub iterations: u64,
    pub max_residue: f64,
    pub constraint_mismatch: f64,
    pub objective: f64,
    pub virtual_ms: f64,
    pub average_wait_fraction: f64,
    pub omega: usize,
    pub lemma2_holds: bool,
}

/// # Safety
/// `run` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn admm_run_stats(run: *const AdmmRun, out: *mut AdmmRunStats) -> AdmmCode {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        let e = &run.execution;
        *out = AdmmRunStats {
            workers: e.outcome.solution.len(),
            iterations: e.summary.iterations,
            max_residue: e.outcome.max_residue,
            constraint_mismatch: e.outcome.constraint_mismatch,
            objective: e.outcome.objective,
            virtual_ms: e.outcome.timing.virtual_ms,
            average_wait_fraction: e.outcome.timing.average_wait_fraction,
            omega: e.report.omega.omega,
            lemma2_holds: e.report.lemma2.holds,
        };
        Ok(())
    })
}

/// Copies worker `worker`'s solution into `buf`. `len` is the capacity in
/// doubles; `needed` (optional) receives the required length. Pass a null
/// `buf` to query the length.
///
/// # Safety
/// `run` must come from this library; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn admm_run_solution(
    run: *const AdmmRun,
    worker: usize,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> AdmmCode {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let x = run
            .execution
            .outcome
            .solution
            .get(worker)
            .ok_or_else(|| (AdmmCode::OutOfRange, format!("no worker {worker}")))?;
        if let Some(n) = needed.as_mut() {
            *n = x.len();
        }
        if buf.is_null() {
            return Ok(());
        }
        if len < x.len() {
            return Err((AdmmCode::BufferTooSmall, format!("need {} doubles, got {len}", x.len())));
        }
        ptr::copy_nonoverlapping(x.as_ptr(), buf, x.len());
        Ok(())
    })
}

/// The run summary as JSON. Release with [`admm_string_free`].
///
/// # Safety
/// `run` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn admm_run_summary_json(run: *const AdmmRun, out: *mut *mut c_char) -> AdmmCode {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = to_c(serde_json::to_string(&run.execution.summary).expect("serializable"));
        Ok(())
    })
}

/// Diagnoses a trace file and returns the report as JSON. Release with
/// [`admm_string_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn admm_analyze_trace(path: *const c_char, out: *mut *mut c_char) -> AdmmCode {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let trace = read_trace(Path::new(text(path)?)).map_err(|e| (AdmmCode::Io, e.to_string()))?;
        let report = analyze(&trace, &AnalysisInputs::default()).map_err(|e| (AdmmCode::Analysis, e.to_string()))?;
        *out = to_c(serde_json::to_string(&report).expect("serializable"));
        Ok(())
    })
}

/// Penalty and proximal-weight lower bounds for the given constants.
///
/// # Safety
/// `rho_min` and `alpha_min` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn admm_parameter_bounds(
    gamma: f64,
    m1: f64,
    m2: f64,
    c: f64,
    omega: usize,
    rho: f64,
    rho_min: *mut f64,
    alpha_min: *mut f64,
) -> AdmmCode {
    guard(|| {
        let (r, a) = (
            rho_min.as_mut().ok_or_else(|| null("rho_min"))?,
            alpha_min.as_mut().ok_or_else(|| null("alpha_min"))?,
        );
        let constants = DiagnosticConstants {
            gamma,
            m1,
            m2,
            c,
            omega,
        };
        let b = parameter_bounds(&constants, rho).map_err(|e| (AdmmCode::Analysis, e.to_string()))?;
        *r = b.rho_min;
        *a = b.alpha_min;
        Ok(())
    })
}

/// # Safety
/// `s` must be a string returned by this library or null.
#[no_mangle]
pub unsafe extern "C" fn admm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
