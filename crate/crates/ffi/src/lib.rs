//! C ABI over `gridlattice`.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every fallible call returns a
//! [`GlStatus`] and leaves a message for [`gl_last_error_message`] on the
//! calling thread. Component ids are 1-based throughout.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use gridlattice::report::load_system_source;
use gridlattice::{
    fmcs_eens, mcs, run_dichotomy, se_enumerate, DichotomyOptions, Error, FmcsOptions, IndexReport,
    McsOptions, OpfEngine, PartitionLedger, State, StopCriteria, SystemModel,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidSystem = 5,
    Solver = 6,
    NoFailedRegion = 7,
    Numerical = 8,
    Panic = 9,
}

/// A loaded system together with its OPF engine and shedding cache.
pub struct GlSystem {
    engine: OpfEngine,
}

/// Outcome of a dichotomy run.
pub struct GlLedger {
    ledger: PartitionLedger,
    components: usize,
}

/// Stopping rule for [`gl_dichotomy_run`]. Unused rules are switched off
/// with `has_dn = false`, `max_opf = 0` and `mixed_mass <= 0`; at least one
/// must be active.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GlStopCriteria {
    pub has_dn: bool,
    /// Stop once the average probability of the last failed lattices is
    /// below `10^-dn`.
    pub dn: i32,
    pub max_opf: u64,
    pub mixed_mass: f64,
}

/// Reliability indices. `beta` is NaN when undefined and `eens` is NaN
/// when the method does not estimate it.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GlIndexReport {
    pub lolp: f64,
    pub eens: f64,
    pub eens_stderr: f64,
    pub beta: f64,
    pub opf_evaluations: u64,
    pub samples: u64,
}

/// One entry of the failed-lattice table.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GlFailedLattice {
    pub shed_mw: f64,
    pub probability: f64,
    /// Number of free components, so the lattice holds `2^num_states_log2` states.
    pub num_states_log2: u32,
    /// Number of components failed in the minimum element.
    pub min_failed_count: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> GlStatus {
    match e {
        Error::Io { .. } => GlStatus::Io,
        Error::Parse(_) => GlStatus::Parse,
        Error::Invalid { .. } => GlStatus::InvalidSystem,
        Error::StateWidth { .. } | Error::NotFree(..) | Error::Config(_) => {
            GlStatus::InvalidArgument
        }
        Error::EnumerationTooLarge(_) => GlStatus::InvalidArgument,
        Error::Lp { .. } => GlStatus::Solver,
        Error::NoFailedRegion => GlStatus::NoFailedRegion,
        Error::ZeroMeanShed { .. } | Error::Monotonicity => GlStatus::Numerical,
    }
}

struct Failure(GlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: GlStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GlStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            GlStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    match p.as_ref() {
        Some(r) => Ok(r),
        None => fail(GlStatus::NullPointer, format!("{what} is null")),
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    match p.as_mut() {
        Some(r) => Ok(r),
        None => fail(GlStatus::NullPointer, format!("{what} is null")),
    }
}

unsafe fn string(p: *const c_char, what: &str) -> Result<String, Failure> {
    if p.is_null() {
        return fail(GlStatus::NullPointer, format!("{what} is null"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(s.to_string()),
        Err(_) => fail(
            GlStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        ),
    }
}

unsafe fn state(model: &SystemModel, ids: *const usize, len: usize) -> Result<State, Failure> {
    if len > 0 && ids.is_null() {
        return fail(GlStatus::NullPointer, "failed_ids is null");
    }
    let ids = if len == 0 {
        &[][..]
    } else {
        std::slice::from_raw_parts(ids, len)
    };
    let n = model.n();
    if let Some(&bad) = ids.iter().find(|&&id| id == 0 || id > n) {
        return fail(
            GlStatus::InvalidArgument,
            format!("component id {bad} outside 1..={n}"),
        );
    }
    Ok(State::from_failed(n, ids))
}

fn report(r: &IndexReport) -> GlIndexReport {
    GlIndexReport {
        lolp: r.lolp,
        eens: r.eens,
        eens_stderr: r.eens_stderr,
        beta: r.beta.unwrap_or(f64::NAN),
        opf_evaluations: r.opf_evaluations,
        samples: r.samples,
    }
}

fn system_handle(model: SystemModel) -> *mut GlSystem {
    Box::into_raw(Box::new(GlSystem {
        engine: OpfEngine::new(Arc::new(model)),
    }))
}

/// Message describing the last failure on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn gl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a system from a JSON file, or a bundled fixture by name
/// (`rbts`, `rbts-rated`, `rts79`, `rts79-continuous`).
///
/// # Safety
/// `source` must be a NUL-terminated string and `out_system` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gl_system_load(
    source: *const c_char,
    out_system: *mut *mut GlSystem,
) -> GlStatus {
    guard(|| {
        let slot = out(out_system, "out_system")?;
        *slot = ptr::null_mut();
        let loaded = load_system_source(&string(source, "source")?)?;
        *slot = system_handle(loaded.model);
        Ok(())
    })
}

/// Parses a system from a JSON document held in memory.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out_system` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gl_system_from_json(
    json: *const c_char,
    out_system: *mut *mut GlSystem,
) -> GlStatus {
    guard(|| {
        let slot = out(out_system, "out_system")?;
        *slot = ptr::null_mut();
        let model = SystemModel::from_json_str(&string(json, "json")?)?;
        *slot = system_handle(model);
        Ok(())
    })
}

/// Releases a system. Null is ignored.
///
/// # Safety
/// `system` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gl_system_free(system: *mut GlSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Number of components (generators then lines); valid ids are `1..=n`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_system_component_count(
    system: *const GlSystem,
    out_count: *mut usize,
) -> GlStatus {
    guard(|| {
        *out(out_count, "out_count")? = deref(system, "system")?.engine.model().n();
        Ok(())
    })
}

/// Probability of the state with exactly `failed_ids` failed.
///
/// # Safety
/// `failed_ids` must point to `len` ids (may be null when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn gl_state_probability(
    system: *const GlSystem,
    failed_ids: *const usize,
    len: usize,
    out_probability: *mut f64,
) -> GlStatus {
    guard(|| {
        let model = deref(system, "system")?.engine.model();
        let s = state(model, failed_ids, len)?;
        *out(out_probability, "out_probability")? = model.state_probability(&s)?;
        Ok(())
    })
}

/// Minimum load shedding in MW of the state with `failed_ids` failed.
///
/// # Safety
/// `failed_ids` must point to `len` ids (may be null when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn gl_state_shed(
    system: *const GlSystem,
    failed_ids: *const usize,
    len: usize,
    out_shed_mw: *mut f64,
) -> GlStatus {
    guard(|| {
        let sys = deref(system, "system")?;
        let s = state(sys.engine.model(), failed_ids, len)?;
        *out(out_shed_mw, "out_shed_mw")? = sys.engine.shed(&s)?;
        Ok(())
    })
}

/// Partitions the state space by dichotomy until `stop` fires.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_dichotomy_run(
    system: *const GlSystem,
    stop: *const GlStopCriteria,
    classify_max: bool,
    out_ledger: *mut *mut GlLedger,
) -> GlStatus {
    guard(|| {
        let slot = out(out_ledger, "out_ledger")?;
        *slot = ptr::null_mut();
        let sys = deref(system, "system")?;
        let stop = deref(stop, "stop")?;
        let mut criteria = if stop.has_dn {
            StopCriteria::dn(stop.dn)
        } else {
            StopCriteria::default()
        };
        criteria.max_opf = (stop.max_opf > 0).then_some(stop.max_opf);
        criteria.mixed_mass_below = (stop.mixed_mass > 0.0).then_some(stop.mixed_mass);
        let ledger = run_dichotomy(&sys.engine, &criteria, &DichotomyOptions { classify_max })?;
        *slot = Box::into_raw(Box::new(GlLedger {
            ledger,
            components: sys.engine.model().n(),
        }));
        Ok(())
    })
}

/// Releases a ledger. Null is ignored.
///
/// # Safety
/// `ledger` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gl_ledger_free(ledger: *mut GlLedger) {
    if !ledger.is_null() {
        drop(Box::from_raw(ledger));
    }
}

/// Analytic LOLP lower bound: the probability of the failed lattices.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_ledger_lolp(ledger: *const GlLedger, out_lolp: *mut f64) -> GlStatus {
    guard(|| {
        *out(out_lolp, "out_lolp")? = deref(ledger, "ledger")?.ledger.lolp_lower;
        Ok(())
    })
}

/// Probability mass still unclassified.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_ledger_mixed_mass(
    ledger: *const GlLedger,
    out_mass: *mut f64,
) -> GlStatus {
    guard(|| {
        *out(out_mass, "out_mass")? = deref(ledger, "ledger")?.ledger.mixed_mass;
        Ok(())
    })
}

/// OPF evaluations spent by the run.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_ledger_opf_count(
    ledger: *const GlLedger,
    out_count: *mut u64,
) -> GlStatus {
    guard(|| {
        *out(out_count, "out_count")? = deref(ledger, "ledger")?.ledger.opf_count;
        Ok(())
    })
}

/// Number of failed lattices found.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_ledger_failed_count(
    ledger: *const GlLedger,
    out_count: *mut usize,
) -> GlStatus {
    guard(|| {
        *out(out_count, "out_count")? = deref(ledger, "ledger")?.ledger.failed.len();
        Ok(())
    })
}

/// Failed lattice `index` in discovery order. When `ids` is non-null, up to
/// `capacity` failed ids of its minimum element are copied into it.
///
/// # Safety
/// `ids` must have room for `capacity` values when non-null.
#[no_mangle]
pub unsafe extern "C" fn gl_ledger_failed_lattice(
    ledger: *const GlLedger,
    index: usize,
    out_lattice: *mut GlFailedLattice,
    ids: *mut usize,
    capacity: usize,
) -> GlStatus {
    guard(|| {
        let l = &deref(ledger, "ledger")?.ledger;
        let Some(f) = l.failed.get(index) else {
            return fail(
                GlStatus::InvalidArgument,
                format!("index {index} >= {}", l.failed.len()),
            );
        };
        let min_ids = f.lattice.min.failed_ids();
        if !ids.is_null() {
            let n = min_ids.len().min(capacity);
            ptr::copy_nonoverlapping(min_ids.as_ptr(), ids, n);
        }
        *out(out_lattice, "out_lattice")? = GlFailedLattice {
            shed_mw: f.shed_mw,
            probability: f.probability,
            num_states_log2: f.lattice.dimension(),
            min_failed_count: min_ids.len() as u32,
        };
        Ok(())
    })
}

/// EENS by sampling inside the failed lattices of `ledger` until the
/// coefficient of variation drops below `beta`. `max_samples = 0` means no
/// cap. The ledger must come from a run on `system`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_fmcs(
    system: *const GlSystem,
    ledger: *const GlLedger,
    beta: f64,
    max_samples: u64,
    seed: u64,
    out_report: *mut GlIndexReport,
) -> GlStatus {
    guard(|| {
        let sys = deref(system, "system")?;
        let l = deref(ledger, "ledger")?;
        if l.components != sys.engine.model().n() {
            return fail(
                GlStatus::InvalidArgument,
                "ledger belongs to a different system",
            );
        }
        if beta.is_nan() || beta <= 0.0 {
            return fail(GlStatus::InvalidArgument, "beta must be positive");
        }
        let opts = FmcsOptions {
            max_samples: (max_samples > 0).then_some(max_samples),
            trace_stride: 0,
            ..FmcsOptions::with_beta(beta)
        };
        let outcome = fmcs_eens(
            &sys.engine,
            &l.ledger.failed,
            &opts,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )?;
        *out(out_report, "out_report")? = report(&outcome.report);
        Ok(())
    })
}

/// Crude Monte Carlo over the whole state space until the coefficient of
/// variation of EENS drops below `beta`. `max_samples = 0` means no cap.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_mcs(
    system: *const GlSystem,
    beta: f64,
    max_samples: u64,
    seed: u64,
    out_report: *mut GlIndexReport,
) -> GlStatus {
    guard(|| {
        let sys = deref(system, "system")?;
        if beta.is_nan() || beta <= 0.0 {
            return fail(GlStatus::InvalidArgument, "beta must be positive");
        }
        let opts = McsOptions {
            max_samples: (max_samples > 0).then_some(max_samples),
            trace_stride: 0,
            ..McsOptions::with_beta(beta)
        };
        let outcome = mcs(&sys.engine, &opts, &mut ChaCha8Rng::seed_from_u64(seed))?;
        *out(out_report, "out_report")? = report(&outcome.report);
        Ok(())
    })
}

/// State enumeration up to `max_level` simultaneous failures; a negative
/// level enumerates the whole space.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_se(
    system: *const GlSystem,
    max_level: i32,
    out_report: *mut GlIndexReport,
) -> GlStatus {
    guard(|| {
        let sys = deref(system, "system")?;
        let level = (max_level >= 0).then_some(max_level as u32);
        let outcome = se_enumerate(&sys.engine, level)?;
        *out(out_report, "out_report")? = report(&outcome.report);
        Ok(())
    })
}

/// Fills `out_report` with the dichotomy LOLP; EENS fields are NaN.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gl_ledger_report(
    ledger: *const GlLedger,
    out_report: *mut GlIndexReport,
) -> GlStatus {
    guard(|| {
        let l = &deref(ledger, "ledger")?.ledger;
        *out(out_report, "out_report")? = GlIndexReport {
            lolp: l.lolp_lower,
            eens: f64::NAN,
            eens_stderr: f64::NAN,
            beta: f64::NAN,
            opf_evaluations: l.opf_count,
            samples: 0,
        };
        Ok(())
    })
}
