//! Continuous-time integration of `x' = f(x)`.
//!
//! The integrator is the embedded Dormand–Prince 5(4) pair with PI step-size
//! control and the classical fourth-order continuous extension, so every
//! accepted step carries an interpolant usable for event bracketing.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type State = Vec<f64>;

pub type FieldFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
pub type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
pub type JacobianFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
pub type ExactFlowFn = dyn Fn(&[f64], f64) -> State + Send + Sync;

/// An autonomous vector field with optional analytic extras.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    eval: Arc<FieldFn>,
    divergence: Option<Arc<ScalarFn>>,
    jacobian: Option<Arc<JacobianFn>>,
    exact_flow: Option<Arc<ExactFlowFn>>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("dim", &self.dim)
            .field("analytic_divergence", &self.divergence.is_some())
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("exact_flow", &self.exact_flow.is_some())
            .finish()
    }
}

impl VectorField {
    pub fn new<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        assert!(dim > 0, "vector field dimension must be positive");
        Self {
            dim,
            eval: Arc::new(eval),
            divergence: None,
            jacobian: None,
            exact_flow: None,
        }
    }

    pub fn with_divergence<F>(mut self, div: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.divergence = Some(Arc::new(div));
        self
    }

    pub fn with_jacobian<F>(mut self, jac: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// Attach a closed-form flow `(x0, t) -> phi_t(x0)`, used as a test oracle.
    pub fn with_exact_flow<F>(mut self, flow: F) -> Self
    where
        F: Fn(&[f64], f64) -> State + Send + Sync + 'static,
    {
        self.exact_flow = Some(Arc::new(flow));
        self
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        (self.eval)(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> State {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    pub fn analytic_divergence(&self) -> Option<&ScalarFn> {
        self.divergence.as_deref()
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(x),
            None => fd_jacobian(self, x),
        }
    }

    pub fn exact_flow(&self) -> Option<&ExactFlowFn> {
        self.exact_flow.as_deref()
    }
}

fn fd_jacobian(f: &VectorField, x: &[f64]) -> DMatrix<f64> {
    let n = f.dim;
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = default_fd_step(x);
        xp[j] = x[j] + h;
        let fp = f.eval(&xp);
        xp[j] = x[j] - h;
        let fm = f.eval(&xp);
        xp[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Tolerances and step limits for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step; `None` selects one automatically.
    pub h_init: Option<f64>,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            h_init: None,
            h_min: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorOptions {
    /// Same options with both tolerances replaced (absolute = relative / 100).
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = rel_tol * 1e-2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_max) {
            return Err(Error::InvalidArgument("require 0 < h_min <= h_max".into()));
        }
        if let Some(h) = self.h_init {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument("h_init must be positive".into()));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Coefficients of the continuous extension for one accepted step.
#[derive(Debug, Clone)]
struct DenseStep {
    t0: f64,
    h: f64,
    /// `[y0, ydiff, bspl, c4, c5]`, each of length `dim`.
    coeffs: Vec<f64>,
}

impl DenseStep {
    fn eval_into(&self, t: f64, dim: usize, out: &mut [f64]) {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.coeffs;
        for i in 0..dim {
            out[i] = c[i]
                + s * (c[dim + i]
                    + s1 * (c[2 * dim + i] + s * (c[3 * dim + i] + s1 * c[4 * dim + i])));
        }
    }
}

/// A piece of continuous trajectory with dense output.
#[derive(Debug, Clone)]
pub struct ContinuousSegment {
    dim: usize,
    times: Vec<f64>,
    states: Vec<State>,
    steps: Vec<DenseStep>,
}

impl ContinuousSegment {
    /// Degenerate segment holding a single state.
    pub fn point(t: f64, x: State) -> Self {
        Self {
            dim: x.len(),
            times: vec![t],
            states: vec![x],
            steps: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("segment has at least one node")
    }

    pub fn duration(&self) -> f64 {
        self.t_end() - self.t_start()
    }

    pub fn start_state(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn end_state(&self) -> &[f64] {
        self.states.last().expect("segment has at least one node")
    }

    pub fn node_times(&self) -> &[f64] {
        &self.times
    }

    pub fn node_states(&self) -> &[State] {
        &self.states
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.times
            .iter()
            .zip(self.states.iter())
            .map(|(&t, x)| (t, x.as_slice()))
    }

    /// Number of accepted steps (node count minus one).
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// Time interval `[t_k, t_{k+1}]` covered by step `k`.
    pub fn step_interval(&self, k: usize) -> (f64, f64) {
        (self.times[k], self.times[k + 1])
    }

    /// Interpolate inside step `k`; `t` is expected in its interval.
    pub fn eval_in_step(&self, k: usize, t: f64) -> State {
        let mut out = vec![0.0; self.dim];
        self.eval_in_step_into(k, t, &mut out);
        out
    }

    fn eval_in_step_into(&self, k: usize, t: f64, out: &mut [f64]) {
        if t == self.times[k] {
            out.copy_from_slice(&self.states[k]);
        } else if t == self.times[k + 1] {
            out.copy_from_slice(&self.states[k + 1]);
        } else {
            self.steps[k].eval_into(t, self.dim, out);
        }
    }

    pub fn eval_at(&self, t: f64) -> Result<State> {
        let (a, b) = (self.t_start(), self.t_end());
        if !(t >= a && t <= b) {
            return Err(Error::OutOfRange {
                t,
                t_start: a,
                t_end: b,
            });
        }
        if self.steps.is_empty() {
            return Ok(self.states[0].clone());
        }
        // index of the last node with time <= t
        let idx = self.times.partition_point(|&s| s <= t) - 1;
        if self.times[idx] == t {
            return Ok(self.states[idx].clone());
        }
        Ok(self.eval_in_step(idx.min(self.steps.len() - 1), t))
    }

    fn push_step(&mut self, step: DenseStep, t1: f64, x1: State) {
        self.steps.push(step);
        self.times.push(t1);
        self.states.push(x1);
    }

    /// Cut the segment at `t` inside its last step, making `(t, x)` the final node.
    pub(crate) fn truncate_last(&mut self, t: f64, x: State) {
        let n = self.times.len();
        debug_assert!(n >= 2 && t > self.times[n - 2] && t <= self.times[n - 1]);
        self.times[n - 1] = t;
        self.states[n - 1] = x;
    }
}

/// How an integration run ended.
#[derive(Debug, Clone)]
pub(crate) enum IntegrationEnd {
    Completed,
    Stopped,
    Failed(Error),
}

pub(crate) struct IntegrationOutcome {
    pub segment: ContinuousSegment,
    pub end: IntegrationEnd,
}

// Dormand-Prince 5(4) tableau; the field is autonomous so the nodes c_i are unused.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI controller constants.
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn weighted_rms(v: &[f64], scale: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(scale).map(|(a, b)| (a / b).powi(2)).sum();
    (s / v.len() as f64).sqrt()
}

fn initial_step(field: &VectorField, x0: &[f64], f0: &[f64], opts: &IntegratorOptions) -> f64 {
    let n = x0.len();
    let scale: Vec<f64> = x0
        .iter()
        .map(|v| opts.abs_tol + opts.rel_tol * v.abs())
        .collect();
    let d0 = weighted_rms(x0, &scale);
    let d1 = weighted_rms(f0, &scale);
    let h0 = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(opts.h_max);
    let x1: Vec<f64> = (0..n).map(|i| x0[i] + h0 * f0[i]).collect();
    let f1 = field.eval(&x1);
    let diff: Vec<f64> = (0..n).map(|i| f1[i] - f0[i]).collect();
    let d2 = weighted_rms(&diff, &scale) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(0.2)
    };
    (100.0 * h0).min(h1).min(opts.h_max)
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Integrate from `(t0, x0)` for `duration`, calling `on_step` after each
/// accepted step. A `Some((t, x))` return truncates the segment there and ends
/// the run. Integration failures are reported in the outcome together with the
/// partial segment.
pub(crate) fn integrate<F>(
    field: &VectorField,
    x0: &[f64],
    t0: f64,
    duration: f64,
    opts: &IntegratorOptions,
    mut on_step: F,
) -> Result<IntegrationOutcome>
where
    F: FnMut(&ContinuousSegment) -> Result<Option<(f64, State)>>,
{
    opts.validate()?;
    let n = field.dimension();
    if x0.len() != n {
        return Err(Error::InvalidArgument(format!(
            "state has dimension {}, field expects {n}",
            x0.len()
        )));
    }
    if !all_finite(x0) {
        return Err(Error::NonFinite { t: t0 });
    }
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument("duration must be positive".into()));
    }

    let t_final = t0 + duration;
    let mut seg = ContinuousSegment::point(t0, x0.to_vec());
    let mut t = t0;
    let mut y = x0.to_vec();
    let mut k1 = field.eval(&y);
    let mut h = opts
        .h_init
        .unwrap_or_else(|| initial_step(field, &y, &k1, opts))
        .min(opts.h_max);
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;

    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut sk = vec![0.0; n];

    let fail = |seg: ContinuousSegment, e: Error| {
        Ok(IntegrationOutcome {
            segment: seg,
            end: IntegrationEnd::Failed(e),
        })
    };

    loop {
        if steps >= opts.max_steps {
            return fail(
                seg,
                Error::MaxStepsExceeded {
                    max_steps: opts.max_steps,
                    t,
                },
            );
        }
        let remaining = t_final - t;
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        } else if h < opts.h_min {
            let e = if all_finite(&y) {
                Error::StepUnderflow { h, t }
            } else {
                Error::NonFinite { t }
            };
            return fail(seg, e);
        }

        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        field.eval_into(&ys, &mut k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        field.eval_into(&ys, &mut k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        field.eval_into(&ys, &mut k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        field.eval_into(&ys, &mut k5);
        for i in 0..n {
            ys[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        field.eval_into(&ys, &mut k6);
        for i in 0..n {
            y1[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        field.eval_into(&y1, &mut k7);
        steps += 1;

        for i in 0..n {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            sk[i] = opts.abs_tol + opts.rel_tol * y[i].abs().max(y1[i].abs());
        }
        let err_norm = weighted_rms(&err, &sk);

        if !err_norm.is_finite() || !all_finite(&k7) {
            // shrink hard and retry; repeated failure ends in underflow
            h *= 0.1;
            last_rejected = true;
            if h < opts.h_min {
                return fail(seg, Error::NonFinite { t });
            }
            continue;
        }

        let fac11 = err_norm.powf(EXPO1);
        if err_norm <= 1.0 {
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = (h / fac).min(opts.h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err_norm.max(1e-4);
            last_rejected = false;

            let mut coeffs = vec![0.0; 5 * n];
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                coeffs[i] = y[i];
                coeffs[n + i] = ydiff;
                coeffs[2 * n + i] = bspl;
                coeffs[3 * n + i] = ydiff - h * k7[i] - bspl;
                coeffs[4 * n + i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t_new = if last { t_final } else { t + h };
            seg.push_step(DenseStep { t0: t, h, coeffs }, t_new, y1.clone());
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);

            if let Some((ts, xs)) = on_step(&seg)? {
                seg.truncate_last(ts, xs);
                return Ok(IntegrationOutcome {
                    segment: seg,
                    end: IntegrationEnd::Stopped,
                });
            }
            if last {
                return Ok(IntegrationOutcome {
                    segment: seg,
                    end: IntegrationEnd::Completed,
                });
            }
            h = h_new;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }
}

/// Integrate `x' = f(x)` from `x0` over `[0, duration]`.
pub fn flow(
    field: &VectorField,
    x0: &[f64],
    duration: f64,
    opts: &IntegratorOptions,
) -> Result<ContinuousSegment> {
    let out = integrate(field, x0, 0.0, duration, opts, |_| Ok(None))?;
    match out.end {
        IntegrationEnd::Failed(e) => Err(e),
        _ => Ok(out.segment),
    }
}

/// Interpolated state of a segment at time `t`.
pub fn eval_at(seg: &ContinuousSegment, t: f64) -> Result<State> {
    seg.eval_at(t)
}

/// Central-difference step used when no step is given: `max(1e-6, 1e-6 * |x|)`.
pub fn default_fd_step(x: &[f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    (1e-6 * norm).max(1e-6)
}

/// Divergence by central differences, one coordinate at a time.
pub fn divergence_fd(field: &VectorField, x: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(
            "finite-difference step must be positive".into(),
        ));
    }
    let mut xp = x.to_vec();
    let mut div = 0.0;
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = field.eval(&xp)[i];
        xp[i] = x[i] - h;
        let fm = field.eval(&xp)[i];
        xp[i] = x[i];
        div += (fp - fm) / (2.0 * h);
    }
    if div.is_finite() {
        Ok(div)
    } else {
        Err(Error::NonFinite { t: f64::NAN })
    }
}

/// Divergence of the field at `x`: analytic when available, otherwise central
/// differences with step `h`.
pub fn divergence_at(field: &VectorField, x: &[f64], h: f64) -> Result<f64> {
    match field.analytic_divergence() {
        Some(div) => {
            let v = div(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite { t: f64::NAN })
            }
        }
        None => divergence_fd(field, x, h),
    }
}

const QUAD_REL_TOL: f64 = 1e-8;
const QUAD_MAX_SUBDIV: usize = 1 << 12;

/// Integral of the divergence along a segment.
///
/// Trapezoidal rule on the node grid, with every step subdivided through the
/// interpolant (doubling) until successive totals agree to `1e-8` relative.
pub fn divergence_integral(field: &VectorField, seg: &ContinuousSegment) -> Result<f64> {
    if seg.num_steps() == 0 {
        return Ok(0.0);
    }
    let div = |x: &[f64]| divergence_at(field, x, default_fd_step(x));
    let mut node_div = Vec::with_capacity(seg.times.len());
    for x in &seg.states {
        node_div.push(div(x)?);
    }
    let mut x = vec![0.0; seg.dim];
    let mut trapezoid = |m: usize| -> Result<f64> {
        let mut total = 0.0;
        for k in 0..seg.num_steps() {
            let (a, b) = seg.step_interval(k);
            let dt = (b - a) / m as f64;
            let mut sum = 0.5 * (node_div[k] + node_div[k + 1]);
            for j in 1..m {
                seg.eval_in_step_into(k, a + j as f64 * dt, &mut x);
                sum += div(&x)?;
            }
            total += sum * dt;
        }
        Ok(total)
    };
    let mut m = 1;
    let mut prev = trapezoid(m)?;
    let floor = 1e-14 * seg.duration().max(1.0);
    loop {
        m *= 2;
        let cur = trapezoid(m)?;
        if (cur - prev).abs() <= QUAD_REL_TOL * cur.abs() + floor || m >= QUAD_MAX_SUBDIV {
            return Ok(cur);
        }
        prev = cur;
    }
}
