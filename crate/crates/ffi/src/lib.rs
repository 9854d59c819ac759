//! C interface to `spc-core`.
//!
//! Every function returns an [`SpcStatus`]; results go through out-pointers.
//! On failure, [`spc_last_error_message`] describes the error. Schedulers are
//! opaque handles created by `spc_scheduler_new_*` and released with
//! [`spc_scheduler_free`]. Strings returned by the library are released with
//! [`spc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spc_core::certificate::certify_delta;
use spc_core::checkpoint::{self, EngineState};
use spc_core::lcb::{beta, epsilon, lcb, EmpiricalCdf};
use spc_core::runners::{load_matrix, ChargeMode, MatrixSource, RuntimeMatrix};
use spc_core::scheduler::{Budget, RunOptions, SchedulerState};
use spc_core::tester::CapSchedule;
use spc_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Io = 4,
    Parse = 5,
    Backend = 6,
    Checkpoint = 7,
    NoCertificate = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpcChargeMode {
    NonResuming = 0,
    Resuming = 1,
}

/// One scheduler step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpcEvent {
    pub t: u64,
    pub config: usize,
    pub instance: u64,
    pub cap_s: f64,
    pub measured_s: f64,
    pub completed: bool,
    pub lcb_s: f64,
    pub r: u64,
    pub q: u64,
    pub charged_total_s: f64,
    pub charged_s: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpcCertificate {
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
    pub confidence: f64,
    pub r_winner: u64,
    pub t: u64,
}

/// Opaque scheduler over a runtime matrix.
pub struct SpcScheduler {
    state: SchedulerState,
    source: MatrixSource,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SpcStatus {
    match err {
        Error::InvalidParameter { .. } => SpcStatus::InvalidArgument,
        Error::Domain(_) | Error::EmptyCdf => SpcStatus::Domain,
        Error::Io(_) => SpcStatus::Io,
        Error::Matrix { .. } | Error::Json(_) | Error::EventLog { .. } => SpcStatus::Parse,
        Error::Step { .. } | Error::Source(_) => SpcStatus::Backend,
        Error::VersionMismatch { .. } | Error::Checkpoint(_) => SpcStatus::Checkpoint,
        _ => SpcStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (SpcStatus, String)>) -> SpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpcStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SpcStatus::Panic
        }
    }
}

fn core<T>(r: spc_core::Result<T>) -> Result<T, (SpcStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (SpcStatus, String) {
    (SpcStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (SpcStatus, String)> {
    // SAFETY: the caller passes either null or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| null(name))
}

unsafe fn handle<'a>(p: *mut SpcScheduler) -> Result<&'a mut SpcScheduler, (SpcStatus, String)> {
    // SAFETY: non-null handles come from `spc_scheduler_new_*`.
    unsafe { p.as_mut() }.ok_or_else(|| null("scheduler"))
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, (SpcStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    // SAFETY: the caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| (SpcStatus::InvalidArgument, format!("`{name}` is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spc_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: per the contract, `s` came from `CString::into_raw`.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spc_epsilon(k: u32, r: u64, t: u64, out: *mut f64) -> SpcStatus {
    guard(|| {
        *unsafe { self::out(out, "out") }? = core(epsilon(k, r, t))?;
        Ok(())
    })
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spc_beta(p: f64, r: u64, t: u64, out: *mut f64) -> SpcStatus {
    guard(|| {
        *unsafe { self::out(out, "out") }? = core(beta(p, r, t))?;
        Ok(())
    })
}

/// Lower confidence bound of `len` capped runtimes (any order).
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn spc_lcb(values: *const f64, len: usize, t: u64, kappa0: f64, out: *mut f64) -> SpcStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        // SAFETY: per the contract, `values` holds `len` doubles.
        let slice = unsafe { std::slice::from_raw_parts(values, len) };
        let cdf = core(EmpiricalCdf::new(slice.to_vec()))?;
        *unsafe { self::out(out, "out") }? = lcb(&cdf, t, kappa0).bound;
        Ok(())
    })
}

/// Smallest certified `δ`; returns `SPC_STATUS_NO_CERTIFICATE` when none
/// exists at these parameters.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spc_certify_delta(
    r: u64,
    t: u64,
    epsilon: f64,
    lambda: f64,
    out: *mut SpcCertificate,
) -> SpcStatus {
    guard(|| {
        let slot = unsafe { self::out(out, "out") }?;
        match core(certify_delta(r, t, epsilon, lambda))? {
            Some(c) => {
                *slot = SpcCertificate {
                    epsilon: c.epsilon,
                    delta: c.delta,
                    lambda: c.lambda,
                    confidence: c.confidence,
                    r_winner: c.r_winner,
                    t: c.t,
                };
                Ok(())
            }
            None => Err((SpcStatus::NoCertificate, "no certificate at these parameters".into())),
        }
    })
}

fn charge_mode(mode: SpcChargeMode) -> ChargeMode {
    match mode {
        SpcChargeMode::NonResuming => ChargeMode::NonResuming,
        SpcChargeMode::Resuming => ChargeMode::Resuming,
    }
}

fn new_scheduler(
    matrix: RuntimeMatrix,
    kappa0: f64,
    multiplier: f64,
    seed: u64,
    mode: SpcChargeMode,
) -> spc_core::Result<Box<SpcScheduler>> {
    let source = MatrixSource::new(matrix, charge_mode(mode));
    let schedule = CapSchedule::new(kappa0, multiplier, None)?;
    let state = SchedulerState::for_source(&source, schedule, seed)?;
    Ok(Box::new(SpcScheduler { state, source }))
}

/// Scheduler over a matrix CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spc_scheduler_new_from_path(
    path: *const c_char,
    kappa0: f64,
    multiplier: f64,
    seed: u64,
    mode: SpcChargeMode,
    out: *mut *mut SpcScheduler,
) -> SpcStatus {
    guard(|| {
        let slot = unsafe { self::out(out, "out") }?;
        let path = unsafe { string(path, "path") }?;
        let matrix = core(load_matrix(path, kappa0))?;
        *slot = Box::into_raw(core(new_scheduler(matrix, kappa0, multiplier, seed, mode))?);
        Ok(())
    })
}

/// Scheduler over matrix CSV text.
///
/// # Safety
/// `csv` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spc_scheduler_new_from_csv(
    csv: *const c_char,
    kappa0: f64,
    multiplier: f64,
    seed: u64,
    mode: SpcChargeMode,
    out: *mut *mut SpcScheduler,
) -> SpcStatus {
    guard(|| {
        let slot = unsafe { self::out(out, "out") }?;
        let text = unsafe { string(csv, "csv") }?;
        let matrix = core(RuntimeMatrix::from_csv(text.as_bytes(), kappa0))?;
        *slot = Box::into_raw(core(new_scheduler(matrix, kappa0, multiplier, seed, mode))?);
        Ok(())
    })
}

/// Restores a scheduler from a checkpoint produced by
/// [`spc_scheduler_snapshot`], over the same matrix CSV text.
///
/// # Safety
/// `csv` and `snapshot` must be NUL-terminated strings; `out` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn spc_scheduler_restore(
    csv: *const c_char,
    snapshot: *const c_char,
    mode: SpcChargeMode,
    out: *mut *mut SpcScheduler,
) -> SpcStatus {
    guard(|| {
        let slot = unsafe { self::out(out, "out") }?;
        let text = unsafe { string(csv, "csv") }?;
        let doc = unsafe { string(snapshot, "snapshot") }?;
        let EngineState::Spc(state) = core(checkpoint::restore(doc))?.engine else {
            return Err((SpcStatus::Checkpoint, "snapshot is not a scheduler checkpoint".into()));
        };
        let matrix = core(RuntimeMatrix::from_csv(text.as_bytes(), state.schedule().kappa0))?;
        if matrix.n_configs() != state.testers().len() {
            return Err((SpcStatus::Checkpoint, "matrix does not match the snapshot".into()));
        }
        let source = MatrixSource::new(matrix, charge_mode(mode));
        *slot = Box::into_raw(Box::new(SpcScheduler { state, source }));
        Ok(())
    })
}

/// # Safety
/// `scheduler` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn spc_scheduler_free(scheduler: *mut SpcScheduler) {
    if !scheduler.is_null() {
        // SAFETY: the handle came from `Box::into_raw`.
        drop(unsafe { Box::from_raw(scheduler) });
    }
}

/// Advances the scheduler by one step.
///
/// # Safety
/// `scheduler` must be a live handle; `out` may be null.
#[no_mangle]
pub unsafe extern "C" fn spc_scheduler_step(scheduler: *mut SpcScheduler, out: *mut SpcEvent) -> SpcStatus {
    guard(|| {
        let h = unsafe { handle(scheduler) }?;
        let e = core(h.state.step(&mut h.source))?;
        // SAFETY: `out` is null or valid for writes.
        if let Some(slot) = unsafe { out.as_mut() } {
            *slot = SpcEvent {
                t: e.t,
                config: e.config,
                instance: e.instance,
                cap_s: e.cap_s,
                measured_s: e.measured_s,
                completed: e.completed,
                lcb_s: e.lcb_s,
                r: e.r,
                q: e.q,
                charged_total_s: e.charged_total_s,
                charged_s: e.charged_s,
            };
        }
        Ok(())
    })
}

/// Steps until `budget_seconds` of charged time is spent or `max_steps`
/// steps were taken (0 means no step limit).
///
/// # Safety
/// `scheduler` must be a live handle; `steps_taken` may be null.
#[no_mangle]
pub unsafe extern "C" fn spc_scheduler_run(
    scheduler: *mut SpcScheduler,
    budget_seconds: f64,
    max_steps: u64,
    steps_taken: *mut u64,
) -> SpcStatus {
    guard(|| {
        let h = unsafe { handle(scheduler) }?;
        let before = h.state.t();
        let options = RunOptions {
            budget: Some(Budget::Virtual(budget_seconds)),
            stop_at_t: (max_steps > 0).then(|| before.saturating_add(max_steps)),
            ..Default::default()
        };
        core(h.state.run_until(&mut h.source, &options, &mut ()))?;
        // SAFETY: `steps_taken` is null or valid for writes.
        if let Some(slot) = unsafe { steps_taken.as_mut() } {
            *slot = h.state.t() - before;
        }
        Ok(())
    })
}

/// # Safety
/// `scheduler` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spc_scheduler_winner(scheduler: *const SpcScheduler, out: *mut usize) -> SpcStatus {
    guard(|| {
        let h = unsafe { handle(scheduler.cast_mut()) }?;
        *unsafe { self::out(out, "out") }? = h.state.current_winner();
        Ok(())
    })
}

/// Number of configurations.
///
/// # Safety
/// `scheduler` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spc_scheduler_num_configs(scheduler: *const SpcScheduler, out: *mut usize) -> SpcStatus {
    guard(|| {
        let h = unsafe { handle(scheduler.cast_mut()) }?;
        *unsafe { self::out(out, "out") }? = h.state.testers().len();
        Ok(())
    })
}

/// Iteration counter `t` and total charged seconds.
///
/// # Safety
/// `scheduler` must be a live handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn spc_scheduler_progress(
    scheduler: *const SpcScheduler,
    t: *mut u64,
    charged_total_s: *mut f64,
) -> SpcStatus {
    guard(|| {
        let h = unsafe { handle(scheduler.cast_mut()) }?;
        // SAFETY: outputs are null or valid for writes.
        if let Some(slot) = unsafe { t.as_mut() } {
            *slot = h.state.t();
        }
        if let Some(slot) = unsafe { charged_total_s.as_mut() } {
            *slot = h.state.charged_total();
        }
        Ok(())
    })
}

/// Active instances and current bound of one configuration.
///
/// # Safety
/// `scheduler` must be a live handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn spc_scheduler_config_state(
    scheduler: *const SpcScheduler,
    config: usize,
    r: *mut u64,
    lcb_s: *mut f64,
) -> SpcStatus {
    guard(|| {
        let h = unsafe { handle(scheduler.cast_mut()) }?;
        let tester = h
            .state
            .testers()
            .get(config)
            .ok_or_else(|| (SpcStatus::InvalidArgument, format!("no configuration {config}")))?;
        // SAFETY: outputs are null or valid for writes.
        if let Some(slot) = unsafe { r.as_mut() } {
            *slot = tester.get_num_active();
        }
        if let Some(slot) = unsafe { lcb_s.as_mut() } {
            *slot = tester.get_lcb(h.state.t());
        }
        Ok(())
    })
}

/// Checkpoint JSON of the scheduler; release with [`spc_string_free`].
///
/// # Safety
/// `scheduler` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spc_scheduler_snapshot(scheduler: *const SpcScheduler, out: *mut *mut c_char) -> SpcStatus {
    guard(|| {
        let h = unsafe { handle(scheduler.cast_mut()) }?;
        let slot = unsafe { self::out(out, "out") }?;
        let text = core(checkpoint::snapshot_scheduler(&h.state, None))?;
        *slot = CString::new(text)
            .map_err(|_| (SpcStatus::Checkpoint, "snapshot contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}
