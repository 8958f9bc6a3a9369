//! C ABI for `d2dcache`.
//!
//! An experiment is held behind an opaque [`D2dExperiment`] handle created
//! from config text or a config file. Every fallible call returns a
//! [`D2dStatus`] whose numeric values match the exit codes of the
//! `d2dcache` binary, and leaves a message for [`d2d_last_error`] on the
//! calling thread.
//!
//! Panics never cross the boundary; they surface as
//! [`D2dStatus::D2D_STATUS_PANIC`].

#![allow(non_camel_case_types)]

use d2dcache::baselines::{run_policy, PolicyId};
use d2dcache::config::{ExperimentConfig, RawConfig};
use d2dcache::model::{offload_gain, CachingStrategy};
use d2dcache::sim::{estimate, Metric};
use d2dcache::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2dStatus {
    D2D_STATUS_OK = 0,
    /// Solver or model failure not covered below.
    D2D_STATUS_INTERNAL = 1,
    /// Malformed or inconsistent configuration.
    D2D_STATUS_CONFIG = 2,
    D2D_STATUS_NON_CONVERGENCE = 3,
    /// A Monte-Carlo estimate was conditioned on an event that never occurred.
    D2D_STATUS_DEGENERATE_ESTIMATE = 4,
    /// Null pointer, invalid UTF-8, wrong buffer length or out-of-domain value.
    D2D_STATUS_INVALID_ARGUMENT = 5,
    D2D_STATUS_PANIC = 6,
}

/// Caching policy selector for [`d2d_optimize`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2dPolicy {
    D2D_POLICY_PROPOSED_EXACT = 0,
    D2D_POLICY_PROPOSED_ASYMPTOTIC = 1,
    D2D_POLICY_UNIFORM = 2,
    D2D_POLICY_ONE_UT = 3,
}

/// Monte-Carlo metric selector for [`d2d_simulate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2dMetric {
    /// One value.
    D2D_METRIC_SUCCESS_PROB = 0,
    /// One value per group.
    D2D_METRIC_ASSOC_PROB = 1,
    /// One value per group.
    D2D_METRIC_ACTIVE_RATIO = 2,
    /// One value, offloaded requesters per m².
    D2D_METRIC_OFFLOAD_GAIN = 3,
}

/// Analytic metrics of one strategy.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct D2dEval {
    pub success_prob: f64,
    /// Offloaded requesters per m².
    pub offload_gain: f64,
}

/// Summary of one optimizer run; the densities go to a separate buffer.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct D2dOptimum {
    /// Total caching density.
    pub x: f64,
    /// Bias-weighted caching density.
    pub y: f64,
    /// Gain of the returned strategy under the full model.
    pub gain: f64,
    /// Objective value reported by the solver itself.
    pub reported_gain: f64,
    pub iterations: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct D2dEstimate {
    pub mean: f64,
    /// NaN for a single realization.
    pub std_error: f64,
    pub ci99_half: f64,
    pub realizations: u64,
}

/// Opaque experiment handle.
pub struct D2dExperiment {
    cfg: ExperimentConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(D2dStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config { .. } | Error::BiasMismatch(_) => D2dStatus::D2D_STATUS_CONFIG,
            Error::NonConvergence { .. } => D2dStatus::D2D_STATUS_NON_CONVERGENCE,
            Error::DegenerateEstimate(_) => D2dStatus::D2D_STATUS_DEGENERATE_ESTIMATE,
            Error::Domain(_) => D2dStatus::D2D_STATUS_INVALID_ARGUMENT,
            _ => D2dStatus::D2D_STATUS_INTERNAL,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(D2dStatus::D2D_STATUS_INVALID_ARGUMENT, msg.into())
}

/// Runs `f`, recording any failure or panic for [`d2d_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> D2dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            D2dStatus::D2D_STATUS_OK
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            D2dStatus::D2D_STATUS_PANIC
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn experiment<'a>(p: *const D2dExperiment) -> Result<&'a D2dExperiment, Failure> {
    p.as_ref().ok_or_else(|| invalid("experiment handle is null"))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| invalid(format!("{what} is null")))
}

/// The strategy from `c[0..len]`, or the config's `strategy.c` when `c` is null.
unsafe fn strategy_arg(exp: &D2dExperiment, c: *const f64, len: usize) -> Result<CachingStrategy, Failure> {
    if c.is_null() {
        return Ok(exp.cfg.strategy()?);
    }
    let m = exp.cfg.profile().len();
    if len != m {
        return Err(invalid(format!("strategy has {len} entries, expected {m}")));
    }
    let values = std::slice::from_raw_parts(c, len).to_vec();
    Ok(CachingStrategy::new(exp.cfg.profile(), values)?)
}

unsafe fn store_handle(out: *mut *mut D2dExperiment, cfg: ExperimentConfig) -> Result<(), Failure> {
    let slot = out_ref(out, "output handle")?;
    *slot = Box::into_raw(Box::new(D2dExperiment { cfg }));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn d2d_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn d2d_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds an experiment from config text (`block.key = value` lines).
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_experiment_parse(text: *const c_char, out: *mut *mut D2dExperiment) -> D2dStatus {
    guard(|| {
        let text = read_str(text, "config text")?;
        store_handle(out, ExperimentConfig::parse(text)?)
    })
}

/// Builds an experiment from a config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn d2d_experiment_load(path: *const c_char, out: *mut *mut D2dExperiment) -> D2dStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure(D2dStatus::D2D_STATUS_CONFIG, format!("cannot read `{path}`: {e}")))?;
        store_handle(out, ExperimentConfig::parse(&text)?)
    })
}

/// Applies one `block.key=value` override. The handle is unchanged on failure.
///
/// # Safety
/// `exp` must come from this library and `assignment` be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn d2d_experiment_set(exp: *mut D2dExperiment, assignment: *const c_char) -> D2dStatus {
    guard(|| {
        let exp = out_ref(exp, "experiment handle")?;
        let assignment = read_str(assignment, "assignment")?;
        let mut raw: RawConfig = exp.cfg.to_raw();
        raw.apply_override(assignment)?;
        exp.cfg = ExperimentConfig::from_raw(&raw)?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `exp` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn d2d_experiment_free(exp: *mut D2dExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Number of user groups, or 0 for a null handle.
///
/// # Safety
/// `exp` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn d2d_experiment_group_count(exp: *const D2dExperiment) -> usize {
    exp.as_ref().map_or(0, |e| e.cfg.profile().len())
}

/// Analytic success probability and offloading gain of a strategy.
///
/// Pass `c = NULL` to use the config's `strategy.c`; otherwise `len` must
/// equal the group count.
///
/// # Safety
/// `c` must point to `len` doubles when not null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn d2d_eval(exp: *const D2dExperiment, c: *const f64, len: usize, out: *mut D2dEval) -> D2dStatus {
    guard(|| {
        let exp = experiment(exp)?;
        let out = out_ref(out, "output")?;
        let strategy = strategy_arg(exp, c, len)?;
        let m = offload_gain(exp.cfg.params(), exp.cfg.profile(), &strategy, None)?;
        *out = D2dEval {
            success_prob: m.success_prob,
            offload_gain: m.offload_gain,
        };
        Ok(())
    })
}

/// Runs one caching policy. The densities are written to `c_out`, which
/// must hold exactly the group count.
///
/// # Safety
/// `c_out` must point to `len` writable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn d2d_optimize(
    exp: *const D2dExperiment,
    policy: D2dPolicy,
    c_out: *mut f64,
    len: usize,
    out: *mut D2dOptimum,
) -> D2dStatus {
    guard(|| {
        let exp = experiment(exp)?;
        let out = out_ref(out, "output")?;
        if c_out.is_null() {
            return Err(invalid("density buffer is null"));
        }
        let m = exp.cfg.profile().len();
        if len != m {
            return Err(invalid(format!("density buffer has {len} entries, expected {m}")));
        }
        let policy = match policy {
            D2dPolicy::D2D_POLICY_PROPOSED_EXACT => PolicyId::ProposedExact,
            D2dPolicy::D2D_POLICY_PROPOSED_ASYMPTOTIC => PolicyId::ProposedAsymptotic,
            D2dPolicy::D2D_POLICY_UNIFORM => PolicyId::Uniform,
            D2dPolicy::D2D_POLICY_ONE_UT => PolicyId::OneUt,
        };
        let res = run_policy(exp.cfg.params(), exp.cfg.profile(), policy, &exp.cfg.policy_settings())?;
        std::slice::from_raw_parts_mut(c_out, len).copy_from_slice(res.c.as_slice());
        *out = D2dOptimum {
            x: res.x,
            y: res.y,
            gain: res.gain,
            reported_gain: res.reported_gain,
            iterations: res.iterations as u64,
        };
        Ok(())
    })
}

/// Monte-Carlo estimate of one metric using the config's `sim` block.
///
/// Writes one estimate for scalar metrics and one per group otherwise;
/// `written` receives the count. Fails with an invalid-argument status if
/// `out_len` is too small.
///
/// # Safety
/// `c` as in [`d2d_eval`]; `out` must point to `out_len` writable estimates
/// and `written` be writable.
#[no_mangle]
pub unsafe extern "C" fn d2d_simulate(
    exp: *const D2dExperiment,
    c: *const f64,
    len: usize,
    metric: D2dMetric,
    out: *mut D2dEstimate,
    out_len: usize,
    written: *mut usize,
) -> D2dStatus {
    guard(|| {
        let exp = experiment(exp)?;
        let written = out_ref(written, "written count")?;
        if out.is_null() {
            return Err(invalid("estimate buffer is null"));
        }
        let strategy = strategy_arg(exp, c, len)?;
        let metric = match metric {
            D2dMetric::D2D_METRIC_SUCCESS_PROB => Metric::SuccessProb,
            D2dMetric::D2D_METRIC_ASSOC_PROB => Metric::AssocProb,
            D2dMetric::D2D_METRIC_ACTIVE_RATIO => Metric::ActiveRatio,
            D2dMetric::D2D_METRIC_OFFLOAD_GAIN => Metric::OffloadGain,
        };
        let cfg = &exp.cfg;
        let list = estimate(cfg.params(), cfg.profile(), &strategy, &cfg.sim.config, metric)?;
        if list.len() > out_len {
            return Err(invalid(format!("estimate buffer holds {out_len}, need {}", list.len())));
        }
        let dst = std::slice::from_raw_parts_mut(out, list.len());
        for (d, e) in dst.iter_mut().zip(&list) {
            *d = D2dEstimate {
                mean: e.mean,
                std_error: e.std_error,
                ci99_half: e.ci99_half,
                realizations: e.realizations as u64,
            };
        }
        *written = list.len();
        Ok(())
    })
}
