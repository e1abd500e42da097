//! C interface to the killmc engine.
//!
//! An engine is created from the text of a TOML configuration, adjusted with
//! `section.key=value` assignments and run to produce a [`KmcReport`]. Every
//! function returns a [`KmcStatus`]; on failure a message is available from
//! [`kmc_last_error`] on the same thread until the next call.
//!
//! The header `include/killmc.h` is regenerated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use killmc::cli::Config;
use killmc::engine;
use killmc::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration could not be parsed or is inconsistent.
    Config = 3,
    /// The model violates its standing assumptions.
    Model = 4,
    /// An internal numerical routine failed.
    Numerical = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// Summary of one estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KmcReport {
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    /// Half-width of the 95% confidence interval.
    pub ci95: f64,
    /// Mean absolute deviation from the sample mean.
    pub mad: f64,
    pub runtime_s: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Opaque engine handle.
pub struct KmcEngine {
    text: String,
    overrides: Vec<String>,
    config: Config,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: KmcStatus, msg: impl Into<String>) -> KmcStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> KmcStatus {
    match e {
        Error::Model(_) => KmcStatus::Model,
        Error::Quadrature(_) => KmcStatus::Numerical,
        _ => KmcStatus::Config,
    }
}

fn from_error(e: Error) -> KmcStatus {
    fail(status_of(&e), e.to_string())
}

/// Run `f`, converting a panic into [`KmcStatus::Panic`].
fn guard(f: impl FnOnce() -> KmcStatus) -> KmcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(KmcStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// # Safety
/// `s` must be null or point to a NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, KmcStatus> {
    if s.is_null() {
        return Err(fail(KmcStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| fail(KmcStatus::InvalidUtf8, e.to_string()))
}

/// Parse a TOML configuration and create an engine in `*out`.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` a valid pointer. The
/// handle written to `*out` must be released with [`kmc_engine_free`].
#[no_mangle]
pub unsafe extern "C" fn kmc_engine_from_config(config: *const c_char, out: *mut *mut KmcEngine) -> KmcStatus {
    guard(|| {
        if out.is_null() {
            return fail(KmcStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = match read_str(config) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Config::parse(text, &[]) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(KmcEngine {
                    text: text.to_owned(),
                    overrides: Vec::new(),
                    config,
                }));
                KmcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Apply one `section.key=value` assignment. A rejected assignment leaves
/// the engine unchanged.
///
/// # Safety
/// `engine` must come from [`kmc_engine_from_config`] and `assignment` must
/// be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kmc_engine_set(engine: *mut KmcEngine, assignment: *const c_char) -> KmcStatus {
    guard(|| {
        let Some(engine) = engine.as_mut() else {
            return fail(KmcStatus::NullPointer, "engine is null");
        };
        let assignment = match read_str(assignment) {
            Ok(a) => a,
            Err(s) => return s,
        };
        let mut overrides = engine.overrides.clone();
        overrides.push(assignment.to_owned());
        match Config::parse(&engine.text, &overrides) {
            Ok(config) => {
                engine.config = config;
                engine.overrides = overrides;
                KmcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Run the configured estimate and write the summary to `*out`.
///
/// # Safety
/// `engine` must come from [`kmc_engine_from_config`] and `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kmc_engine_run(engine: *const KmcEngine, out: *mut KmcReport) -> KmcStatus {
    guard(|| {
        let Some(engine) = engine.as_ref() else {
            return fail(KmcStatus::NullPointer, "engine is null");
        };
        if out.is_null() {
            return fail(KmcStatus::NullPointer, "out is null");
        }
        let report = match engine.config.run_config().and_then(|rc| engine::run(&rc)) {
            Ok(r) => r,
            Err(e) => return from_error(e),
        };
        *out = KmcReport {
            mean: report.mean,
            variance: report.variance,
            std_error: report.stderr,
            ci95: report.ci95,
            mad: report.mad,
            runtime_s: report.runtime_s,
            samples: report.samples,
            seed: report.seed,
        };
        KmcStatus::Ok
    })
}

/// Release an engine. Null is ignored.
///
/// # Safety
/// `engine` must be null or come from [`kmc_engine_from_config`], and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kmc_engine_free(engine: *mut KmcEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn kmc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
