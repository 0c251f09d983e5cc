//! C ABI over the assessment engine.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every fallible call returns a
//! [`CaStatus`] and, on failure, records a message retrievable with
//! [`ca_last_error`] on the same thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use convassess::acoustics::{load_overlaps, EnergySeries};
use convassess::config::{build_engine, resolve_config};
use convassess::features::AudioInputs;
use convassess::{Assessment, Engine, EngineError, Label, Metric};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    /// Malformed transcript, energy or overlap input.
    Format = 4,
    /// The conversation cannot be assessed (for example no provider speech).
    Assessment = 5,
    /// Segment index or metric name does not exist.
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaLabel {
    None = 0,
    Good = 1,
    Bad = 2,
}

impl From<Label> for CaLabel {
    fn from(l: Label) -> Self {
        match l {
            Label::None => CaLabel::None,
            Label::Good => CaLabel::Good,
            Label::Bad => CaLabel::Bad,
        }
    }
}

/// A configured engine. Not safe for concurrent use; one per thread.
pub struct CaEngine(Engine);

pub struct CaAssessment(Assessment);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type Failure = (CaStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CaStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((CaStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (CaStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| (CaStatus::NullArgument, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| (CaStatus::NullArgument, format!("{what} is null")))
}

/// Builds an engine from `key = value` configuration text. Pass null for
/// the defaults. On success `*out` owns a new engine.
///
/// # Safety
/// `config_text` must be null or a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ca_engine_new(config_text: *const c_char, out: *mut *mut CaEngine) -> CaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let conf = optional_text(config_text, "config_text")?;
        let cfg = resolve_config(conf, &[], false).map_err(|e| (CaStatus::Config, e.to_string()))?;
        let engine = build_engine(&cfg).map_err(|e| (CaStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(CaEngine(engine)));
        Ok(())
    })
}

/// # Safety
/// `engine` must be null or a handle from [`ca_engine_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ca_engine_free(engine: *mut CaEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Assesses one transcript. `energy_csv` and `overlaps_csv` hold side file
/// contents and may be null.
///
/// # Safety
/// `engine` must be a live handle; string arguments null or valid C
/// strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ca_analyze(
    engine: *mut CaEngine,
    transcript_json: *const c_char,
    energy_csv: *const c_char,
    overlaps_csv: *const c_char,
    out: *mut *mut CaAssessment,
) -> CaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let engine = out_ptr(engine, "engine")?;
        let transcript = text(transcript_json, "transcript_json")?;
        let format = |e: &dyn std::fmt::Display| (CaStatus::Format, e.to_string());
        let energy = optional_text(energy_csv, "energy_csv")?
            .map(|t| EnergySeries::parse(t.as_bytes()))
            .transpose()
            .map_err(|e| format(&e))?;
        let overlaps = optional_text(overlaps_csv, "overlaps_csv")?
            .map(|t| load_overlaps(t.as_bytes()))
            .transpose()
            .map_err(|e| format(&e))?;
        let a = engine
            .0
            .analyze_bytes(transcript.as_bytes(), &AudioInputs { energy, overlaps })
            .map_err(|e| match e {
                EngineError::Transcript(_) => (CaStatus::Format, e.to_string()),
                _ => (CaStatus::Assessment, e.to_string()),
            })?;
        *out = Box::into_raw(Box::new(CaAssessment(a)));
        Ok(())
    })
}

/// # Safety
/// `assessment` must be null or a handle from [`ca_analyze`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ca_assessment_free(assessment: *mut CaAssessment) {
    if !assessment.is_null() {
        drop(Box::from_raw(assessment));
    }
}

/// Serialized assessment. Free `*out` with [`ca_string_free`].
///
/// # Safety
/// `assessment` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ca_assessment_to_json(assessment: *const CaAssessment, out: *mut *mut c_char) -> CaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let a = handle(assessment, "assessment")?;
        let json = CString::new(a.0.to_json()).map_err(|e| (CaStatus::Format, e.to_string()))?;
        *out = json.into_raw();
        Ok(())
    })
}

/// Number of transcript segments covered by the assessment.
///
/// # Safety
/// `assessment` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ca_assessment_segment_count(assessment: *const CaAssessment, out: *mut usize) -> CaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = handle(assessment, "assessment")?.0.segment_count();
        Ok(())
    })
}

/// Label for one segment and metric (`understanding`, `empathy`, `emotion`,
/// `presence` or `clarity`).
///
/// # Safety
/// `assessment` must be a live handle, `metric` a valid C string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ca_assessment_label(
    assessment: *const CaAssessment,
    segment: usize,
    metric: *const c_char,
    out: *mut CaLabel,
) -> CaStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let a = handle(assessment, "assessment")?;
        let name = text(metric, "metric")?;
        let metric: Metric = name
            .parse()
            .map_err(|_| (CaStatus::OutOfRange, format!("unknown metric `{name}`")))?;
        let l = a
            .0
            .label(segment, metric)
            .ok_or_else(|| (CaStatus::OutOfRange, format!("no segment {segment}")))?;
        *out = l.label.into();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ca_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next `ca_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ca_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn ca_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
