//! C ABI over the trace-analysis library.
//!
//! Conventions: objects cross the boundary as opaque handles owned by Rust
//! and released with the matching `_free` function; fallible calls return a
//! [`GemmasStatus`] and write results through out-pointers; the message for
//! the most recent failure on the current thread is available via
//! [`gemmas_last_error`]. Strings returned as `char*` are UTF-8,
//! NUL-terminated, and must be released with [`gemmas_string_free`].
//!
//! Analysis through this ABI always uses the deterministic local embedding
//! provider, so results are reproducible without network access.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use gemmas::features::ProviderKind;
use gemmas::gen::{generate_synthetic_run, GenSpec};
use gemmas::io::{parse_run, serialize_run};
use gemmas::metrics::{analyze_run, AnalysisConfig, MetricsReport};
use gemmas::trace::RunRecord;

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GemmasStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The file could not be read.
    Io = 3,
    /// The document failed schema or graph validation.
    Parse = 4,
    /// Arguments were structurally valid but semantically wrong.
    InvalidInput = 5,
    /// Metric computation failed.
    Metric = 6,
}

/// An owned benchmark run (opaque).
pub struct GemmasRun {
    inner: RunRecord,
}

/// An owned metrics report (opaque).
pub struct GemmasReport {
    inner: MetricsReport,
}

/// Analysis knobs; get defaults from `gemmas_analysis_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GemmasAnalysisOptions {
    /// Syntactic channel weight in [0, 1]; semantic gets the remainder.
    pub lambda1: f64,
    /// Inclusive contribution threshold for path necessity.
    pub upr_threshold: f64,
    /// Token display divisor (1000 reports kilotokens).
    pub token_scale: f64,
    /// Worker cap for per-trace parallelism; 0 means single-threaded.
    pub workers: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<Vec<u8>>) {
    let text = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn fail(status: GemmasStatus, message: impl std::fmt::Display) -> GemmasStatus {
    set_error(message.to_string());
    status
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn gemmas_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn gemmas_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must have been returned by a `gemmas_*` function and not freed before.
#[no_mangle]
pub unsafe extern "C" fn gemmas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Parse a run document from a byte buffer.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out_run` must be a valid
/// pointer to write the handle through.
#[no_mangle]
pub unsafe extern "C" fn gemmas_run_parse(
    data: *const u8,
    len: usize,
    out_run: *mut *mut GemmasRun,
) -> GemmasStatus {
    if data.is_null() || out_run.is_null() {
        return fail(GemmasStatus::NullArgument, "data and out_run must be non-null");
    }
    let bytes = unsafe { std::slice::from_raw_parts(data, len) };
    match parse_run(bytes) {
        Ok(parsed) => {
            unsafe { *out_run = Box::into_raw(Box::new(GemmasRun { inner: parsed.run })) };
            GemmasStatus::Ok
        }
        Err(err) => fail(GemmasStatus::Parse, err),
    }
}

/// Read and parse a run document from a file path.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_run` must be valid to write.
#[no_mangle]
pub unsafe extern "C" fn gemmas_run_read_file(
    path: *const c_char,
    out_run: *mut *mut GemmasRun,
) -> GemmasStatus {
    if path.is_null() || out_run.is_null() {
        return fail(GemmasStatus::NullArgument, "path and out_run must be non-null");
    }
    let path = match unsafe { CStr::from_ptr(path) }.to_str() {
        Ok(p) => p,
        Err(_) => return fail(GemmasStatus::InvalidUtf8, "path is not valid UTF-8"),
    };
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(err) => return fail(GemmasStatus::Io, format!("{path}: {err}")),
    };
    unsafe { gemmas_run_parse(bytes.as_ptr(), bytes.len(), out_run) }
}

/// Generate a deterministic synthetic run.
///
/// # Safety
/// `out_run` must be valid to write.
#[no_mangle]
pub unsafe extern "C" fn gemmas_run_generate(
    agents: usize,
    problems: usize,
    edge_density: f64,
    correctness_rate: f64,
    vocabulary_size: usize,
    seed: u64,
    out_run: *mut *mut GemmasRun,
) -> GemmasStatus {
    if out_run.is_null() {
        return fail(GemmasStatus::NullArgument, "out_run must be non-null");
    }
    let spec = GenSpec {
        num_agents: agents,
        num_problems: problems,
        edge_density,
        correctness_rate,
        vocabulary_size,
        seed,
    };
    match generate_synthetic_run(&spec) {
        Ok(run) => {
            unsafe { *out_run = Box::into_raw(Box::new(GemmasRun { inner: run })) };
            GemmasStatus::Ok
        }
        Err(err) => fail(GemmasStatus::InvalidInput, err),
    }
}

/// Serialize a run back to the trace schema; null on error.
///
/// # Safety
/// `run` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn gemmas_run_serialize(run: *const GemmasRun) -> *mut c_char {
    let Some(run) = (unsafe { run.as_ref() }) else {
        set_error("run must be non-null");
        return ptr::null_mut();
    };
    match CString::new(serialize_run(&run.inner)) {
        Ok(text) => text.into_raw(),
        Err(err) => {
            set_error(err.to_string());
            ptr::null_mut()
        }
    }
}

/// Validate every trace graph. Returns `Ok` and writes null when valid;
/// returns `InvalidInput` and writes a newline-separated violation listing
/// (free with `gemmas_string_free`) when not.
///
/// # Safety
/// `run` must be a live handle; `out_message` must be valid to write.
#[no_mangle]
pub unsafe extern "C" fn gemmas_run_validate(
    run: *const GemmasRun,
    out_message: *mut *mut c_char,
) -> GemmasStatus {
    if out_message.is_null() {
        return fail(GemmasStatus::NullArgument, "out_message must be non-null");
    }
    unsafe { *out_message = ptr::null_mut() };
    let Some(run) = (unsafe { run.as_ref() }) else {
        return fail(GemmasStatus::NullArgument, "run must be non-null");
    };
    let mut lines = Vec::new();
    for trace in &run.inner.traces {
        let report = trace.graph.validate();
        for violation in report.violations() {
            lines.push(format!("problem {}: {violation}", trace.problem_id));
        }
    }
    if lines.is_empty() {
        return GemmasStatus::Ok;
    }
    let text = lines.join("\n");
    if let Ok(message) = CString::new(text.clone()) {
        unsafe { *out_message = message.into_raw() };
    }
    fail(GemmasStatus::InvalidInput, text)
}

/// Number of traces in the run; 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gemmas_run_trace_count(run: *const GemmasRun) -> usize {
    unsafe { run.as_ref() }.map_or(0, |r| r.inner.traces.len())
}

/// Release a run handle.
///
/// # Safety
/// `run` must be null or a live handle; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gemmas_run_free(run: *mut GemmasRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}

/// Default analysis options (equal channel weights, 0.5 threshold,
/// kilotoken scale, four workers).
#[no_mangle]
pub extern "C" fn gemmas_analysis_options_default() -> GemmasAnalysisOptions {
    let config = AnalysisConfig::default();
    GemmasAnalysisOptions {
        lambda1: config.lambda1,
        upr_threshold: config.upr_threshold,
        token_scale: config.token_scale,
        workers: config.workers as u32,
    }
}

/// Analyze a run with the local embedding provider.
///
/// # Safety
/// `run` must be a live handle; `options` may be null (defaults apply);
/// `out_report` must be valid to write.
#[no_mangle]
pub unsafe extern "C" fn gemmas_analyze(
    run: *const GemmasRun,
    options: *const GemmasAnalysisOptions,
    out_report: *mut *mut GemmasReport,
) -> GemmasStatus {
    if out_report.is_null() {
        return fail(GemmasStatus::NullArgument, "out_report must be non-null");
    }
    let Some(run) = (unsafe { run.as_ref() }) else {
        return fail(GemmasStatus::NullArgument, "run must be non-null");
    };
    let options = unsafe { options.as_ref() }
        .copied()
        .unwrap_or_else(|| gemmas_analysis_options_default());
    let config = AnalysisConfig {
        lambda1: options.lambda1,
        upr_threshold: options.upr_threshold,
        provider: ProviderKind::Local,
        remote_url: None,
        token_scale: options.token_scale,
        workers: options.workers.max(1) as usize,
    };
    match analyze_run(&run.inner, &config) {
        Ok(report) => {
            unsafe { *out_report = Box::into_raw(Box::new(GemmasReport { inner: report })) };
            GemmasStatus::Ok
        }
        Err(err) => fail(GemmasStatus::Metric, err),
    }
}

/// Run accuracy in [0, 1]; NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gemmas_report_accuracy(report: *const GemmasReport) -> f64 {
    unsafe { report.as_ref() }.map_or(f64::NAN, |r| r.inner.accuracy)
}

/// Mean prompt tokens per problem at the configured scale.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gemmas_report_prompt_tokens(report: *const GemmasReport) -> f64 {
    unsafe { report.as_ref() }.map_or(f64::NAN, |r| r.inner.ptok)
}

/// Mean completion tokens per problem at the configured scale.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gemmas_report_completion_tokens(report: *const GemmasReport) -> f64 {
    unsafe { report.as_ref() }.map_or(f64::NAN, |r| r.inner.ctok)
}

/// Mean information diversity score. Returns false when the metric is
/// undefined for every trace (no connected pairs); `out_value` is written
/// only on true.
///
/// # Safety
/// `report` must be null or a live handle; `out_value` must be valid to write.
#[no_mangle]
pub unsafe extern "C" fn gemmas_report_ids(
    report: *const GemmasReport,
    out_value: *mut f64,
) -> bool {
    read_optional(unsafe { report.as_ref() }.and_then(|r| r.inner.ids), out_value)
}

/// Mean unnecessary path ratio; same defined-ness contract as
/// `gemmas_report_ids`.
///
/// # Safety
/// `report` must be null or a live handle; `out_value` must be valid to write.
#[no_mangle]
pub unsafe extern "C" fn gemmas_report_upr(
    report: *const GemmasReport,
    out_value: *mut f64,
) -> bool {
    read_optional(unsafe { report.as_ref() }.and_then(|r| r.inner.upr), out_value)
}

fn read_optional(value: Option<f64>, out_value: *mut f64) -> bool {
    match value {
        Some(v) if !out_value.is_null() => {
            unsafe { *out_value = v };
            true
        }
        _ => false,
    }
}

/// Full report (aggregates plus per-problem values) as a JSON string; null on
/// error.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gemmas_report_to_json(report: *const GemmasReport) -> *mut c_char {
    let Some(report) = (unsafe { report.as_ref() }) else {
        set_error("report must be non-null");
        return ptr::null_mut();
    };
    match serde_json::to_string_pretty(&report.inner)
        .map_err(|e| e.to_string())
        .and_then(|text| CString::new(text).map_err(|e| e.to_string()))
    {
        Ok(text) => text.into_raw(),
        Err(err) => {
            set_error(err);
            ptr::null_mut()
        }
    }
}

/// Release a report handle.
///
/// # Safety
/// `report` must be null or a live handle; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gemmas_report_free(report: *mut GemmasReport) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}
