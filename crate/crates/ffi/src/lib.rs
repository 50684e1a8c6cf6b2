//! C ABI over the planner: load a profile, plan a GEMM, read the schedule.
//!
//! Every function returns a [`PoasStatus`]; on failure a message is kept in
//! thread-local storage and readable through [`poas_last_error`]. Handles
//! are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use poas::device_model::{fit_linear, OpsCount};
use poas::profiler::{load_profile, profile_from_text};
use poas::report::plan;
use poas::scheduler::{save_schedule, Schedule};
use poas::{Error, MachineProfile, MatrixDims};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoasStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad dimensions, non-UTF-8 text or otherwise invalid input values.
    InvalidArgument = 2,
    Io = 3,
    /// Malformed profile or schedule text.
    Parse = 4,
    /// Valid input with no acceptable plan (alignment, feasibility).
    Unsatisfiable = 5,
    Numerical = 6,
    /// The caller's buffer is shorter than the data.
    BufferTooSmall = 7,
    /// Internal invariant violation or panic.
    Internal = 8,
}

/// A loaded machine profile.
pub struct PoasProfile {
    inner: MachineProfile,
}

/// A planned schedule.
pub struct PoasSchedule {
    inner: Schedule,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PoasStatus {
    match e {
        Error::Io { .. } => PoasStatus::Io,
        Error::Parse { .. } | Error::InvalidProfile(_) | Error::ScheduleFormat(_) => {
            PoasStatus::Parse
        }
        Error::InvalidDims(_)
        | Error::InvalidConfig(_)
        | Error::NotRowAligned { .. }
        | Error::Overflow(_)
        | Error::DegenerateSamples { .. }
        | Error::NonPositiveTime { .. }
        | Error::NonPositiveSlope { .. } => PoasStatus::InvalidArgument,
        Error::UnalignableK { .. }
        | Error::UnalignableRows { .. }
        | Error::NoFeasibleTiling { .. }
        | Error::Infeasible
        | Error::MissingDevice(_)
        | Error::MachineMismatch { .. }
        | Error::TooManyDevices { .. }
        | Error::NoInputs => PoasStatus::Unsatisfiable,
        Error::NumericalFailure(_) => PoasStatus::Numerical,
        Error::BackendFailure { .. } | Error::Invariant(_) => PoasStatus::Internal,
    }
}

struct Fail(PoasStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `body`, converting errors and panics into a status plus message.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> PoasStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            PoasStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside poas");
            PoasStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(PoasStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn utf8<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| {
        Fail(
            PoasStatus::InvalidArgument,
            format!("`{name}` is not UTF-8"),
        )
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next `poas_*` call on the same thread.
#[no_mangle]
pub extern "C" fn poas_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a profile file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn poas_profile_load(
    path: *const c_char,
    out: *mut *mut PoasProfile,
) -> PoasStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = utf8(path, "path")?;
        let inner = load_profile(Path::new(path))?;
        *out = Box::into_raw(Box::new(PoasProfile { inner }));
        Ok(())
    })
}

/// Parses profile text held in memory.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn poas_profile_from_text(
    text: *const c_char,
    out: *mut *mut PoasProfile,
) -> PoasStatus {
    guard(|| {
        non_null(out, "out")?;
        let inner = profile_from_text(utf8(text, "text")?)?;
        *out = Box::into_raw(Box::new(PoasProfile { inner }));
        Ok(())
    })
}

/// # Safety
/// `profile` must come from `poas_profile_load`/`poas_profile_from_text`
/// and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn poas_profile_free(profile: *mut PoasProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Number of devices; 0 for a null handle.
///
/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn poas_profile_device_count(profile: *const PoasProfile) -> usize {
    profile.as_ref().map_or(0, |p| p.inner.devices.len())
}

/// Splits an `m x n x k` GEMM across the profile's devices.
///
/// # Safety
/// `profile` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn poas_plan(
    profile: *const PoasProfile,
    m: u64,
    n: u64,
    k: u64,
    out: *mut *mut PoasSchedule,
) -> PoasStatus {
    guard(|| {
        non_null(profile, "profile")?;
        non_null(out, "out")?;
        let dims = MatrixDims::new(m, n, k)?;
        let inner = plan(&(*profile).inner, dims)?;
        *out = Box::into_raw(Box::new(PoasSchedule { inner }));
        Ok(())
    })
}

/// # Safety
/// `schedule` must come from `poas_plan` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn poas_schedule_free(schedule: *mut PoasSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// Predicted makespan in seconds.
///
/// # Safety
/// `schedule` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn poas_schedule_makespan(
    schedule: *const PoasSchedule,
    out: *mut f64,
) -> PoasStatus {
    guard(|| {
        non_null(schedule, "schedule")?;
        non_null(out, "out")?;
        *out = (*schedule).inner.makespan;
        Ok(())
    })
}

/// Copies per-device row counts, in profile order, into `rows[0..len]`.
/// `written` receives the device count even when the buffer is too small.
///
/// # Safety
/// `rows` must point to `len` writable values (it may be null when `len`
/// is 0); `schedule` must be a live handle and `written` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn poas_schedule_rows(
    schedule: *const PoasSchedule,
    rows: *mut u64,
    len: usize,
    written: *mut usize,
) -> PoasStatus {
    guard(|| {
        non_null(schedule, "schedule")?;
        non_null(written, "written")?;
        let devices = &(*schedule).inner.devices;
        *written = devices.len();
        if len < devices.len() {
            return Err(Fail(
                PoasStatus::BufferTooSmall,
                format!("need room for {} rows, got {len}", devices.len()),
            ));
        }
        non_null(rows, "rows")?;
        for (i, d) in devices.iter().enumerate() {
            *rows.add(i) = d.rows;
        }
        Ok(())
    })
}

/// The schedule as JSON; release with `poas_string_free`.
///
/// # Safety
/// `schedule` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn poas_schedule_to_json(
    schedule: *const PoasSchedule,
    out: *mut *mut c_char,
) -> PoasStatus {
    guard(|| {
        non_null(schedule, "schedule")?;
        non_null(out, "out")?;
        let json = CString::new((*schedule).inner.to_json())
            .map_err(|_| Fail(PoasStatus::Internal, "schedule JSON contains NUL".into()))?;
        *out = json.into_raw();
        Ok(())
    })
}

/// Writes the schedule file.
///
/// # Safety
/// `schedule` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn poas_schedule_save(
    schedule: *const PoasSchedule,
    path: *const c_char,
) -> PoasStatus {
    guard(|| {
        non_null(schedule, "schedule")?;
        save_schedule(&(*schedule).inner, Path::new(utf8(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `s` must come from a `poas_*` function returning an owned string. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn poas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Least-squares `seconds = slope * ops + intercept`.
///
/// # Safety
/// `ops` and `seconds` must point to `len` values; `slope` and `intercept`
/// must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn poas_fit_linear(
    ops: *const u64,
    seconds: *const f64,
    len: usize,
    slope: *mut f64,
    intercept: *mut f64,
) -> PoasStatus {
    guard(|| {
        non_null(ops, "ops")?;
        non_null(seconds, "seconds")?;
        non_null(slope, "slope")?;
        non_null(intercept, "intercept")?;
        let ops = std::slice::from_raw_parts(ops, len);
        let secs = std::slice::from_raw_parts(seconds, len);
        let samples: Vec<(OpsCount, f64)> = ops
            .iter()
            .map(|&o| OpsCount(o))
            .zip(secs.iter().copied())
            .collect();
        let model = fit_linear(&samples)?;
        *slope = model.slope;
        *intercept = model.intercept;
        Ok(())
    })
}
