//! C interface to the hybrid-cycles toolkit.
//!
//! Models and trajectories are opaque handles owned by the caller and
//! released with the matching `_free` function. Every fallible call returns
//! an [`HcStatus`]; the text of the most recent error on the calling thread is
//! available through [`hc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hybrid_cycles::hybrid::{hybrid_flow, HybridOptions, HybridTrajectory, Termination};
use hybrid_cycles::models::{self, Model};
use hybrid_cycles::poincare::{
    derivative_multi, determinant_test, find_periodic_point, return_map, DerivativeOptions,
    DeterminantVerdict, Verdict,
};
use hybrid_cycles::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownModel = 3,
    /// Integration, refinement or root-finding failure.
    Numerical = 4,
    /// The orbit breaks a standing assumption (grazing, Zeno, fixed point of the field).
    HypothesisViolation = 5,
    NotFixedPoint = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// How a simulation ended.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcTermination {
    TimeElapsed = 0,
    ImpactBudget = 1,
    ZenoSuspected = 2,
    LeftDomain = 3,
    BlowUp = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcVerdict {
    Stable = 0,
    Unstable = 1,
    Marginal = 2,
    /// Volume test without a verdict.
    Inconclusive = 3,
}

/// Solver settings. Obtain defaults with [`hc_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HcOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_tol: f64,
    pub h_tol: f64,
    pub max_impacts: usize,
}

/// Decomposed stability factor of a periodic orbit.
///
/// For systems of dimension above two only `product` (the volume bound),
/// `reset_derivative`, `speed_ratio`, `sine_ratio`, `divergence_factor` and
/// `period` are filled; `fd_check` is NaN when no finite difference was taken.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HcStability {
    pub fixed_point: f64,
    pub reset_derivative: f64,
    pub speed_ratio: f64,
    pub sine_ratio: f64,
    pub divergence_factor: f64,
    pub product: f64,
    pub fd_check: f64,
    pub period: f64,
    pub impacts_per_period: usize,
    pub verdict: HcVerdict,
}

/// A built-in hybrid system with its section chart.
pub struct HcModel {
    model: Model,
}

/// A simulated hybrid trajectory.
pub struct HcTrajectory {
    traj: HybridTrajectory,
    dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: HcStatus, msg: impl Into<String>) -> HcStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> HcStatus {
    match e {
        Error::InvalidArgument(_) => HcStatus::InvalidArgument,
        Error::UnknownModel(_) => HcStatus::UnknownModel,
        Error::NotFixedPoint { .. } => HcStatus::NotFixedPoint,
        e if e.is_hypothesis_violation() => HcStatus::HypothesisViolation,
        _ => HcStatus::Numerical,
    }
}

fn from_error(e: Error) -> HcStatus {
    fail(status_of(&e), e.to_string())
}

fn guarded<F: FnOnce() -> HcStatus>(f: F) -> HcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(HcStatus::Panic, "internal panic"),
    }
}

unsafe fn opt_str<'a>(p: *const c_char) -> Result<Option<&'a str>, HcStatus> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| fail(HcStatus::InvalidArgument, "string is not valid UTF-8"))
}

fn hybrid_options(o: Option<&HcOptions>) -> Result<HybridOptions, HcStatus> {
    let mut opts = HybridOptions::default();
    if let Some(o) = o {
        for (name, v) in [
            ("rel_tol", o.rel_tol),
            ("abs_tol", o.abs_tol),
            ("t_tol", o.t_tol),
            ("h_tol", o.h_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(fail(
                    HcStatus::InvalidArgument,
                    format!("{name} must be positive, got {v}"),
                ));
            }
        }
        opts.integrator.rel_tol = o.rel_tol;
        opts.integrator.abs_tol = o.abs_tol;
        opts.t_tol = o.t_tol;
        opts.h_tol = o.h_tol;
        opts.max_impacts = o.max_impacts;
    }
    Ok(opts)
}

unsafe fn write_state(x: &[f64], out: *mut f64, len: usize) -> HcStatus {
    if out.is_null() {
        return fail(HcStatus::NullPointer, "output buffer is null");
    }
    if len < x.len() {
        return fail(
            HcStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", x.len()),
        );
    }
    ptr::copy_nonoverlapping(x.as_ptr(), out, x.len());
    HcStatus::Ok
}

/// Default solver settings.
#[no_mangle]
pub extern "C" fn hc_options_default() -> HcOptions {
    let o = HybridOptions::default();
    HcOptions {
        rel_tol: o.integrator.rel_tol,
        abs_tol: o.integrator.abs_tol,
        t_tol: o.t_tol,
        h_tol: o.h_tol,
        max_impacts: o.max_impacts,
    }
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Build a named model. `params_json` may be null for the defaults.
///
/// # Safety
/// `name` must be a NUL-terminated string, `params_json` null or one, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hc_model_new(
    name: *const c_char,
    params_json: *const c_char,
    out: *mut *mut HcModel,
) -> HcStatus {
    guarded(|| {
        if out.is_null() {
            return fail(HcStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let name = match opt_str(name) {
            Ok(Some(n)) => n,
            Ok(None) => return fail(HcStatus::NullPointer, "model name is null"),
            Err(s) => return s,
        };
        let params = match opt_str(params_json) {
            Ok(Some(text)) => match serde_json::from_str(text) {
                Ok(v) => v,
                Err(e) => return fail(HcStatus::InvalidArgument, format!("params: {e}")),
            },
            Ok(None) => serde_json::Value::Object(Default::default()),
            Err(s) => return s,
        };
        match models::build(name, params) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(HcModel { model }));
                HcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `model` must be null or a handle from [`hc_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_model_free(model: *mut HcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// State dimension of the model, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_model_dimension(model: *const HcModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.system.dimension())
}

/// Copy the model's default initial state into `out`.
///
/// # Safety
/// `model` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hc_model_initial_state(
    model: *const HcModel,
    out: *mut f64,
    len: usize,
) -> HcStatus {
    match model.as_ref() {
        Some(m) => write_state(&m.model.x0, out, len),
        None => fail(HcStatus::NullPointer, "model is null"),
    }
}

/// Simulate from `x0` (length `dim`) for `horizon` time units.
/// `options` may be null for the defaults.
///
/// # Safety
/// `model` must be a live handle, `x0` point to `dim` doubles, `options` be
/// null or valid, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hc_simulate(
    model: *const HcModel,
    x0: *const f64,
    dim: usize,
    horizon: f64,
    options: *const HcOptions,
    out: *mut *mut HcTrajectory,
) -> HcStatus {
    guarded(|| {
        if out.is_null() {
            return fail(HcStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(m) = model.as_ref() else {
            return fail(HcStatus::NullPointer, "model is null");
        };
        if x0.is_null() {
            return fail(HcStatus::NullPointer, "x0 is null");
        }
        let sys = &m.model.system;
        if dim != sys.dimension() {
            return fail(
                HcStatus::InvalidArgument,
                format!(
                    "x0 has {dim} entries, model dimension is {}",
                    sys.dimension()
                ),
            );
        }
        let opts = match hybrid_options(options.as_ref()) {
            Ok(o) => o,
            Err(s) => return s,
        };
        let x0 = std::slice::from_raw_parts(x0, dim);
        match hybrid_flow(sys, x0, horizon, &opts) {
            Ok(traj) => {
                *out = Box::into_raw(Box::new(HcTrajectory { traj, dim }));
                HcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `traj` must be null or a handle from [`hc_simulate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_trajectory_free(traj: *mut HcTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_trajectory_impact_count(traj: *const HcTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.traj.impacts.len())
}

/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_trajectory_duration(traj: *const HcTrajectory) -> f64 {
    traj.as_ref().map_or(f64::NAN, |t| t.traj.t_total)
}

/// # Safety
/// `traj` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hc_trajectory_termination(
    traj: *const HcTrajectory,
    out: *mut HcTermination,
) -> HcStatus {
    let Some(t) = traj.as_ref() else {
        return fail(HcStatus::NullPointer, "trajectory is null");
    };
    if out.is_null() {
        return fail(HcStatus::NullPointer, "out is null");
    }
    *out = match t.traj.termination {
        Termination::TimeElapsed => HcTermination::TimeElapsed,
        Termination::ImpactBudget => HcTermination::ImpactBudget,
        Termination::ZenoSuspected => HcTermination::ZenoSuspected,
        Termination::LeftDomain => HcTermination::LeftDomain,
        Termination::BlowUp => HcTermination::BlowUp,
    };
    HcStatus::Ok
}

/// Impact `index`: its time and the pre- and post-impact states.
/// Any of the output pointers may be null.
///
/// # Safety
/// `traj` must be a live handle; non-null state buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hc_trajectory_impact(
    traj: *const HcTrajectory,
    index: usize,
    t: *mut f64,
    x_minus: *mut f64,
    x_plus: *mut f64,
    len: usize,
) -> HcStatus {
    let Some(tr) = traj.as_ref() else {
        return fail(HcStatus::NullPointer, "trajectory is null");
    };
    let Some(e) = tr.traj.impacts.get(index) else {
        return fail(
            HcStatus::InvalidArgument,
            format!("impact {index} of {}", tr.traj.impacts.len()),
        );
    };
    if len < tr.dim && !(x_minus.is_null() && x_plus.is_null()) {
        return fail(
            HcStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", tr.dim),
        );
    }
    if !t.is_null() {
        *t = e.t;
    }
    if !x_minus.is_null() {
        ptr::copy_nonoverlapping(e.x_minus.as_ptr(), x_minus, tr.dim);
    }
    if !x_plus.is_null() {
        ptr::copy_nonoverlapping(e.x_plus.as_ptr(), x_plus, tr.dim);
    }
    HcStatus::Ok
}

/// State at time `t` (post-impact at impact times).
///
/// # Safety
/// `traj` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hc_trajectory_state_at(
    traj: *const HcTrajectory,
    t: f64,
    out: *mut f64,
    len: usize,
) -> HcStatus {
    guarded(|| {
        let Some(tr) = traj.as_ref() else {
            return fail(HcStatus::NullPointer, "trajectory is null");
        };
        match tr.traj.state_at(t) {
            Ok(x) => write_state(&x, out, len),
            Err(e) => from_error(e),
        }
    })
}

/// Final state of the trajectory.
///
/// # Safety
/// `traj` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hc_trajectory_final_state(
    traj: *const HcTrajectory,
    out: *mut f64,
    len: usize,
) -> HcStatus {
    let Some(tr) = traj.as_ref() else {
        return fail(HcStatus::NullPointer, "trajectory is null");
    };
    match tr.traj.final_state() {
        Some(x) => write_state(x, out, len),
        None => fail(HcStatus::InvalidArgument, "empty trajectory"),
    }
}

/// Locate a period-`period` orbit from the chart coordinate `s_guess` (NaN for
/// the model default) and report its stability factor.
///
/// # Safety
/// `model` must be a live handle, `options` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn hc_stability(
    model: *const HcModel,
    s_guess: f64,
    period: usize,
    options: *const HcOptions,
    out: *mut HcStability,
) -> HcStatus {
    guarded(|| {
        let Some(m) = model.as_ref() else {
            return fail(HcStatus::NullPointer, "model is null");
        };
        if out.is_null() {
            return fail(HcStatus::NullPointer, "out is null");
        }
        if period == 0 {
            return fail(HcStatus::InvalidArgument, "period must be at least 1");
        }
        let opts = match hybrid_options(options.as_ref()) {
            Ok(o) => o,
            Err(s) => return s,
        };
        match stability(&m.model, s_guess, period, &opts) {
            Ok(s) => {
                *out = s;
                HcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

fn stability(
    model: &Model,
    s_guess: f64,
    period: usize,
    opts: &HybridOptions,
) -> hybrid_cycles::Result<HcStability> {
    let (sys, chart) = (&model.system, &model.chart);
    let guess = if s_guess.is_nan() {
        model.s_guess
    } else {
        s_guess
    };
    let s = find_periodic_point(sys, chart, guess, period, opts)?;
    if sys.dimension() == 2 {
        let mut cycle = vec![s];
        let mut x = chart.point(s);
        for _ in 1..period {
            x = return_map(sys, &x, opts)?.x_out;
            cycle.push(chart.coordinate(&x));
        }
        let r = derivative_multi(sys, chart, &cycle, opts, &DerivativeOptions::default())?;
        return Ok(HcStability {
            fixed_point: s,
            reset_derivative: r.reset_derivative,
            speed_ratio: r.speed_ratio,
            sine_ratio: r.sine_ratio,
            divergence_factor: r.divergence_factor,
            product: r.product,
            fd_check: r.fd_check.unwrap_or(f64::NAN),
            period: r.period,
            impacts_per_period: r.impacts_per_period,
            verdict: match r.verdict {
                Verdict::Stable => HcVerdict::Stable,
                Verdict::Unstable => HcVerdict::Unstable,
                Verdict::Marginal => HcVerdict::Marginal,
            },
        });
    }
    if period != 1 {
        return Err(Error::InvalidArgument(
            "the volume test handles period-one orbits only".into(),
        ));
    }
    let r = determinant_test(sys, &chart.point(s), None, opts)?;
    Ok(HcStability {
        fixed_point: s,
        reset_derivative: r.reset_volume,
        speed_ratio: r.speed_ratio,
        sine_ratio: r.sine_ratio,
        divergence_factor: r.divergence_factor,
        product: r.value,
        fd_check: f64::NAN,
        period: r.period,
        impacts_per_period: 1,
        verdict: match r.verdict {
            DeterminantVerdict::NecessarilyUnstable => HcVerdict::Unstable,
            _ => HcVerdict::Inconclusive,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_mapping() {
        assert_eq!(
            status_of(&Error::UnknownModel("x".into())),
            HcStatus::UnknownModel
        );
        assert_eq!(
            status_of(&Error::ZenoSuspected { impacts: 3, t: 1.0 }),
            HcStatus::HypothesisViolation
        );
        assert_eq!(status_of(&Error::NonFinite { t: 0.0 }), HcStatus::Numerical);
        assert_eq!(
            status_of(&Error::NotFixedPoint { residual: 1.0 }),
            HcStatus::NotFixedPoint
        );
    }

    #[test]
    fn default_options_round_trip() {
        let o = hc_options_default();
        assert_eq!(hybrid_options(Some(&o)).unwrap(), HybridOptions::default());
        let bad = HcOptions {
            h_tol: f64::NAN,
            ..o
        };
        assert_eq!(hybrid_options(Some(&bad)), Err(HcStatus::InvalidArgument));
    }
}
