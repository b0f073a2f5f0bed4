//! The hybrid flow: integrate, detect the impact, apply the reset, repeat.
//!
//! At an impact instant the hybrid state is the post-impact value `x+`; the
//! pre-impact value `x-` closes the preceding continuous segment.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guard::{refine_crossing, transversality, CrossingScanner, Guard, SectionFrame};
use crate::ode::{
    integrate, ContinuousSegment, IntegrationEnd, IntegratorOptions, State, VectorField,
};
use crate::poincare::SectionChart;

pub type ResetFn = dyn Fn(&[f64]) -> State + Send + Sync;
pub type ResetDerivativeFn = dyn Fn(&[f64], &[f64]) -> State + Send + Sync;
pub type DomainFn = dyn Fn(&[f64]) -> bool + Send + Sync;

/// Tolerance on `|f|` at declared fixed points.
pub const FIXED_POINT_TOL: f64 = 1e-10;

/// The impact map `Delta: S -> X`.
#[derive(Clone)]
pub struct Reset {
    map: Arc<ResetFn>,
    derivative: Option<Arc<ResetDerivativeFn>>,
}

impl fmt::Debug for Reset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reset")
            .field("analytic_derivative", &self.derivative.is_some())
            .finish()
    }
}

impl Reset {
    pub fn new<F>(map: F) -> Self
    where
        F: Fn(&[f64]) -> State + Send + Sync + 'static,
    {
        Self {
            map: Arc::new(map),
            derivative: None,
        }
    }

    pub fn identity() -> Self {
        Self::new(|x| x.to_vec()).with_derivative(|_, v| v.to_vec())
    }

    /// Attach `(x, v) -> DDelta(x) v` for tangent vectors `v` of `S` at `x`.
    pub fn with_derivative<F>(mut self, d: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> State + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(d));
        self
    }

    pub fn apply(&self, x: &[f64]) -> State {
        (self.map)(x)
    }

    pub fn derivative_along(&self, x: &[f64], tangent: &[f64]) -> Option<State> {
        self.derivative.as_ref().map(|d| d(x, tangent))
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }
}

/// A hybrid system `(X, S, f, Delta)`.
#[derive(Clone)]
pub struct HybridSystem {
    pub name: String,
    pub field: VectorField,
    pub guard: Guard,
    pub reset: Reset,
    fixed_points: Option<Vec<State>>,
    domain: Option<Arc<DomainFn>>,
}

impl fmt::Debug for HybridSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HybridSystem")
            .field("name", &self.name)
            .field("field", &self.field)
            .field("guard", &self.guard)
            .field("reset", &self.reset)
            .field("fixed_points", &self.fixed_points)
            .field("domain_check", &self.domain.is_some())
            .finish()
    }
}

impl HybridSystem {
    pub fn new(name: impl Into<String>, field: VectorField, guard: Guard, reset: Reset) -> Self {
        Self {
            name: name.into(),
            field,
            guard,
            reset,
            fixed_points: None,
            domain: None,
        }
    }

    /// Declare `fix(f)`; every point must satisfy `|f| <= 1e-10`.
    pub fn with_fixed_points(mut self, points: Vec<State>) -> Result<Self> {
        for p in &points {
            let speed = norm(&self.field.eval(p));
            if speed > FIXED_POINT_TOL {
                return Err(Error::InvalidArgument(format!(
                    "declared fixed point {p:?} has |f| = {speed:e}"
                )));
            }
        }
        self.fixed_points = Some(points);
        Ok(self)
    }

    pub fn with_domain<F>(mut self, domain: F) -> Self
    where
        F: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.domain = Some(Arc::new(domain));
        self
    }

    pub fn dimension(&self) -> usize {
        self.field.dimension()
    }

    pub fn fixed_points(&self) -> Option<&[State]> {
        self.fixed_points.as_deref()
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.domain.as_ref().is_none_or(|d| d(x))
    }

    /// Whether `x` lies in the union of `eps`-balls around `fix(f)`;
    /// `None` when no fixed points were declared.
    pub fn near_fixed_point(&self, x: &[f64], eps: f64) -> Option<bool> {
        self.fixed_points
            .as_ref()
            .map(|pts| pts.iter().any(|p| distance(p, x) < eps))
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Options of the hybrid engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridOptions {
    pub integrator: IntegratorOptions,
    /// Bracket width for impact-time refinement.
    pub t_tol: f64,
    /// Residual bound `|H(x-)|` at refined impacts.
    pub h_tol: f64,
    pub max_impacts: usize,
    pub min_impact_gap: f64,
    pub max_chained_resets: usize,
    /// Radius of the balls around declared fixed points.
    pub fixed_point_radius: f64,
    /// Horizon used when searching for an impact without a time budget.
    pub impact_horizon: f64,
    /// Relative transversality below which an impact is logged as grazing.
    pub grazing_warning: f64,
}

impl Default for HybridOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorOptions::default(),
            t_tol: 1e-12,
            h_tol: 1e-9,
            max_impacts: 100_000,
            min_impact_gap: 1e-9,
            max_chained_resets: 3,
            fixed_point_radius: 1e-3,
            impact_horizon: 1e4,
            grazing_warning: 1e-6,
        }
    }
}

impl HybridOptions {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.integrator = self.integrator.with_rel_tol(rel_tol);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactEvent {
    pub t: f64,
    pub x_minus: State,
    pub x_plus: State,
    /// `<grad H, f>` at `x_minus`.
    pub transversality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    TimeElapsed,
    ImpactBudget,
    ZenoSuspected,
    LeftDomain,
    BlowUp,
}

/// Piecewise-smooth hybrid solution.
#[derive(Debug, Clone)]
pub struct HybridTrajectory {
    pub segments: Vec<ContinuousSegment>,
    pub impacts: Vec<ImpactEvent>,
    pub t_total: f64,
    pub termination: Termination,
    /// Segment `k` ends with `impacts[impact_of_segment[k]]`, if any.
    segment_impact: Vec<Option<usize>>,
}

impl HybridTrajectory {
    fn empty(termination: Termination) -> Self {
        Self {
            segments: Vec::new(),
            impacts: Vec::new(),
            t_total: 0.0,
            termination,
            segment_impact: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// State at time `t`; at an impact time this is the post-impact state.
    pub fn state_at(&self, t: f64) -> Result<State> {
        let first = self
            .segments
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
        let last = self.segments.last().unwrap();
        if t < first.t_start() || t > last.t_end() {
            return Err(Error::OutOfRange {
                t,
                t_start: first.t_start(),
                t_end: last.t_end(),
            });
        }
        let idx = self.segments.partition_point(|s| s.t_start() <= t) - 1;
        let seg = &self.segments[idx];
        if t > seg.t_end() {
            // only possible for a terminated run; report the last known state
            return Ok(seg.end_state().to_vec());
        }
        seg.eval_at(t)
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.segments.last().map(|s| s.end_state())
    }

    /// Does segment `k` end with an impact?
    pub fn segment_ends_in_impact(&self, k: usize) -> bool {
        self.segment_impact.get(k).copied().flatten().is_some()
    }

    /// CSV with columns `t, x0..x{n-1}, segment_index, impact_flag`; the flag
    /// is 1 on the pre-impact row. Numbers carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let dim = self
            .segments
            .first()
            .map(|s| s.dimension())
            .unwrap_or_default();
        let mut header = vec!["t".to_string()];
        header.extend((0..dim).map(|i| format!("x{i}")));
        header.push("segment_index".into());
        header.push("impact_flag".into());
        writeln!(w, "{}", header.join(","))?;
        for (k, seg) in self.segments.iter().enumerate() {
            let n = seg.node_times().len();
            for (j, (t, x)) in seg.nodes().enumerate() {
                let flag = usize::from(j + 1 == n && self.segment_ends_in_impact(k));
                let mut row = vec![fmt_num(t)];
                row.extend(x.iter().map(|v| fmt_num(*v)));
                row.push(k.to_string());
                row.push(flag.to_string());
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// Fixed 17-significant-digit formatting used by every CSV writer.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Simulate the hybrid flow from `x0` for `horizon` time units.
pub fn hybrid_flow(
    sys: &HybridSystem,
    x0: &[f64],
    horizon: f64,
    opts: &HybridOptions,
) -> Result<HybridTrajectory> {
    run(sys, x0, horizon, None, opts)
}

/// The first `n` impacts of the hybrid orbit of `x0`.
///
/// The search stops early on any termination; the events found so far are
/// returned with it.
pub fn impact_sequence(
    sys: &HybridSystem,
    x0: &[f64],
    n: usize,
    opts: &HybridOptions,
) -> Result<(Vec<ImpactEvent>, Termination)> {
    if n == 0 {
        return Ok((Vec::new(), Termination::ImpactBudget));
    }
    let traj = run(sys, x0, opts.impact_horizon, Some(n), opts)?;
    Ok((traj.impacts, traj.termination))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LegStop {
    Impact,
    LeftDomain,
}

pub(crate) fn run(
    sys: &HybridSystem,
    x0: &[f64],
    horizon: f64,
    stop_after: Option<usize>,
    opts: &HybridOptions,
) -> Result<HybridTrajectory> {
    if x0.len() != sys.dimension() {
        return Err(Error::InvalidArgument(format!(
            "initial state has dimension {}, system has {}",
            x0.len(),
            sys.dimension()
        )));
    }
    if !(horizon >= 0.0) {
        return Err(Error::InvalidArgument(
            "horizon must be non-negative".into(),
        ));
    }
    if !sys.in_domain(x0) {
        return Err(Error::InvalidArgument(format!(
            "{x0:?} is outside the domain"
        )));
    }
    if horizon == 0.0 {
        return Ok(HybridTrajectory::empty(Termination::TimeElapsed));
    }

    let guard = &sys.guard;
    let dir = guard.direction();
    let mut traj = HybridTrajectory::empty(Termination::TimeElapsed);
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut chained = 0usize;
    let mut short_gaps = 0usize;
    // the last reset left the state where it was, so flow off S instead
    let mut unchanged_by_reset = false;

    loop {
        if let Some(n) = stop_after {
            if traj.impacts.len() >= n {
                traj.termination = Termination::ImpactBudget;
                break;
            }
        }
        let remaining = horizon - t;
        if !(remaining > 0.0) {
            traj.termination = Termination::TimeElapsed;
            break;
        }

        let h0 = guard.value(&x);
        let on_surface = h0.abs() <= opts.h_tol;
        let rate = if on_surface {
            transversality(&sys.field, guard, &x)
        } else {
            0.0
        };

        if on_surface && dir.admits_rate(rate) && !unchanged_by_reset {
            // landed on the active part of S: reset again without flowing
            chained += 1;
            if chained > opts.max_chained_resets {
                traj.termination = Termination::ZenoSuspected;
                break;
            }
            let x_plus = sys.reset.apply(&x);
            traj.segments.push(ContinuousSegment::point(t, x.clone()));
            traj.segment_impact.push(Some(traj.impacts.len()));
            traj.impacts.push(ImpactEvent {
                t,
                x_minus: x,
                x_plus: x_plus.clone(),
                transversality: rate,
            });
            unchanged_by_reset = same_state(&traj.impacts.last().unwrap().x_minus, &x_plus);
            x = x_plus;
            if !sys.in_domain(&x) {
                traj.segments.push(ContinuousSegment::point(t, x.clone()));
                traj.segment_impact.push(None);
                traj.termination = Termination::LeftDomain;
                break;
            }
            if traj.impacts.len() > opts.max_impacts {
                traj.termination = Termination::ZenoSuspected;
                break;
            }
            continue;
        }

        let initial_sign = if on_surface {
            if rate != 0.0 {
                Some((t, rate.signum()))
            } else {
                None
            }
        } else {
            Some((t, h0.signum()))
        };
        let mut scanner = CrossingScanner::new(dir, initial_sign);
        let mut stop = None;
        let outcome = integrate(&sys.field, &x, t, remaining, &opts.integrator, |seg| {
            let k = seg.num_steps() - 1;
            if let Some(b) = scanner.scan_step(guard, seg, k) {
                let hit = refine_crossing(guard, seg, &b, opts.t_tol, opts.h_tol)?;
                stop = Some(LegStop::Impact);
                return Ok(Some(hit));
            }
            let end = seg.end_state();
            if !sys.in_domain(end) {
                stop = Some(LegStop::LeftDomain);
                return Ok(Some((seg.t_end(), end.to_vec())));
            }
            Ok(None)
        })?;

        let seg = outcome.segment;
        match outcome.end {
            IntegrationEnd::Completed => {
                t = seg.t_end();
                traj.segments.push(seg);
                traj.segment_impact.push(None);
                traj.termination = Termination::TimeElapsed;
                break;
            }
            IntegrationEnd::Failed(e) => match e {
                Error::NonFinite { .. } | Error::StepUnderflow { .. } => {
                    t = seg.t_end();
                    traj.segments.push(seg);
                    traj.segment_impact.push(None);
                    traj.termination = Termination::BlowUp;
                    break;
                }
                other => return Err(other),
            },
            IntegrationEnd::Stopped => {
                let t_stop = seg.t_end();
                let x_stop = seg.end_state().to_vec();
                match stop {
                    Some(LegStop::LeftDomain) | None => {
                        t = t_stop;
                        traj.segments.push(seg);
                        traj.segment_impact.push(None);
                        traj.termination = Termination::LeftDomain;
                        break;
                    }
                    Some(LegStop::Impact) => {
                        chained = 0;
                        let rate = transversality(&sys.field, guard, &x_stop);
                        let scale = norm(&sys.field.eval(&x_stop)) * norm(&guard.gradient(&x_stop));
                        if rate.abs() < opts.grazing_warning * scale {
                            log::warn!(
                                "near-grazing impact at t = {t_stop}: <grad H, f> = {rate:e}"
                            );
                        }
                        let gap = traj.impacts.last().map_or(f64::INFINITY, |e| t_stop - e.t);
                        let x_plus = sys.reset.apply(&x_stop);
                        traj.segments.push(seg);
                        traj.segment_impact.push(Some(traj.impacts.len()));
                        traj.impacts.push(ImpactEvent {
                            t: t_stop,
                            x_minus: x_stop.clone(),
                            x_plus: x_plus.clone(),
                            transversality: rate,
                        });
                        t = t_stop;
                        unchanged_by_reset = same_state(&x_stop, &x_plus);
                        x = x_plus;

                        if gap < opts.min_impact_gap {
                            let near = sys
                                .near_fixed_point(&x_stop, opts.fixed_point_radius)
                                .unwrap_or(false);
                            short_gaps = if near { 0 } else { short_gaps + 1 };
                        } else {
                            short_gaps = 0;
                        }
                        if short_gaps >= 2 || traj.impacts.len() > opts.max_impacts {
                            traj.termination = Termination::ZenoSuspected;
                            break;
                        }
                        if !sys.in_domain(&x) {
                            traj.segments.push(ContinuousSegment::point(t, x.clone()));
                            traj.segment_impact.push(None);
                            traj.termination = Termination::LeftDomain;
                            break;
                        }
                    }
                }
            }
        }
    }
    traj.t_total = t;
    Ok(traj)
}

fn same_state(a: &[f64], b: &[f64]) -> bool {
    distance(a, b) <= 1e-14 * (1.0 + norm(a))
}

/// Outcome of one sampled hypothesis check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotChecked,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub id: &'static str,
    pub description: &'static str,
    pub status: CheckStatus,
    /// Chart coordinate of the witnessing sample.
    pub witness: Option<f64>,
    /// The measured quantity (minimum norm, separation, sine, ...).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn get(&self, id: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

/// Samples of a section chart: `count` equispaced coordinates in `range`.
#[derive(Debug, Clone)]
pub struct ChartSampling {
    pub chart: SectionChart,
    pub range: (f64, f64),
    pub count: usize,
}

impl ChartSampling {
    pub fn coordinates(&self) -> Vec<f64> {
        let (a, b) = self.range;
        let n = self.count.max(2);
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Threshold on `|sin|` below which a crossing counts as non-transverse.
pub const TRANSVERSALITY_MIN_SINE: f64 = 1e-6;

/// Sampled numerical checks of the planar hypotheses on a section chart.
///
/// * `H.4`: `grad H` nonzero on the samples of `S`.
/// * `H.6`: image samples `Delta(S)` are separated from the part of `S` that
///   triggers impacts (samples crossing in the guard direction), away from
///   the declared fixed points.
/// * `C.2`: the chart coordinate of `Delta(chart(s))` is strictly monotone.
/// * `C.4`: the sampled piece of `S` is an arc, not a closed curve.
/// * `C.5`: `f` is transverse to `S` and to `Delta(S)` on the samples.
pub fn check_hypotheses(
    sys: &HybridSystem,
    sampling: &ChartSampling,
    opts: &HybridOptions,
) -> HypothesisReport {
    let chart = &sampling.chart;
    let coords = sampling.coordinates();
    let on_s: Vec<State> = coords.iter().map(|&s| chart.point(s)).collect();
    let images: Vec<State> = on_s.iter().map(|x| sys.reset.apply(x)).collect();
    let mut checks = Vec::new();

    // H.4
    let (mut min_grad, mut at) = (f64::INFINITY, None);
    for (s, x) in coords.iter().zip(&on_s) {
        let g = norm(&sys.guard.gradient(x));
        if g < min_grad {
            min_grad = g;
            at = Some(*s);
        }
    }
    checks.push(HypothesisCheck {
        id: "H.4",
        description: "guard gradient nonzero on S",
        status: if min_grad > 1e-12 {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        witness: at,
        value: min_grad,
    });

    // H.6
    let eps = opts.fixed_point_radius;
    let active: Vec<&State> = on_s
        .iter()
        .filter(|x| {
            sys.guard
                .direction()
                .admits_rate(transversality(&sys.field, &sys.guard, x))
        })
        .collect();
    let (mut sep, mut at) = (f64::INFINITY, None);
    for (s, y) in coords.iter().zip(&images) {
        if sys.near_fixed_point(y, eps).unwrap_or(false) {
            continue;
        }
        let on_active_surface = sys.guard.value(y).abs() <= opts.h_tol
            && sys
                .guard
                .direction()
                .admits_rate(transversality(&sys.field, &sys.guard, y));
        let d = if on_active_surface {
            0.0
        } else {
            active
                .iter()
                .map(|x| distance(x, y))
                .fold(f64::INFINITY, f64::min)
        };
        if d < sep {
            sep = d;
            at = Some(*s);
        }
    }
    checks.push(HypothesisCheck {
        id: "H.6",
        description: "reset image separated from the active impact surface",
        status: if sep > 1e-9 {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        witness: at,
        value: sep,
    });

    // C.2
    let image_coords: Vec<f64> = images.iter().map(|y| chart.coordinate(y)).collect();
    let diffs: Vec<f64> = image_coords.windows(2).map(|w| w[1] - w[0]).collect();
    let first_sign = diffs.first().map_or(0.0, |d| d.signum());
    let violation = diffs
        .iter()
        .position(|d| *d == 0.0 || d.signum() != first_sign);
    checks.push(HypothesisCheck {
        id: "C.2",
        description: "reset injective along S (monotone chart coordinate)",
        status: if violation.is_none() && first_sign != 0.0 {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        witness: violation.map(|i| coords[i + 1]),
        value: diffs.iter().fold(f64::INFINITY, |m, d| m.min(d.abs())),
    });

    // C.4
    let arc_length: f64 = on_s.windows(2).map(|w| distance(&w[0], &w[1])).sum();
    let gap = distance(&on_s[0], on_s.last().unwrap());
    let closed = gap < 1e-3 * arc_length;
    checks.push(HypothesisCheck {
        id: "C.4",
        description: "sampled section is an interval (not a closed curve)",
        status: if closed {
            CheckStatus::Fail
        } else {
            CheckStatus::Pass
        },
        witness: if closed { Some(coords[0]) } else { None },
        value: gap,
    });

    // C.5
    let (mut min_sine, mut at) = (f64::INFINITY, None);
    if sys.dimension() == 2 {
        for (i, s) in coords.iter().enumerate() {
            let frame_s = chart.frame(*s);
            let f_x = sys.field.eval(&on_s[i]);
            let sin_s = frame_sine(&f_x, frame_s.as_ref().ok());
            let frame_d = crate::poincare::image_frame(sys, chart, *s);
            let f_y = sys.field.eval(&images[i]);
            let sin_d = frame_sine(&f_y, frame_d.as_ref().ok());
            let m = sin_s.min(sin_d);
            if m < min_sine {
                min_sine = m;
                at = Some(*s);
            }
        }
        checks.push(HypothesisCheck {
            id: "C.5",
            description: "flow transverse to S and Delta(S)",
            status: if min_sine > TRANSVERSALITY_MIN_SINE {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            witness: at,
            value: min_sine,
        });
    } else {
        checks.push(HypothesisCheck {
            id: "C.5",
            description: "flow transverse to S and Delta(S)",
            status: CheckStatus::NotChecked,
            witness: None,
            value: f64::NAN,
        });
    }

    HypothesisReport { checks }
}

fn frame_sine(v: &[f64], frame: Option<&SectionFrame>) -> f64 {
    match frame {
        Some(fr) => crate::guard::signed_sine(v, fr).map_or(0.0, f64::abs),
        None => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guard::Direction;

    fn sawtooth_2d() -> HybridSystem {
        // x' = 1, y' = 0; reset x from 1 back to 0
        let field = VectorField::new(2, |_, dx| {
            dx[0] = 1.0;
            dx[1] = 0.0;
        });
        let guard = Guard::new(|x| x[0] - 1.0, Direction::NegativeToPositive)
            .with_gradient(|_| vec![1.0, 0.0]);
        HybridSystem::new("sawtooth", field, guard, Reset::new(|x| vec![0.0, x[1]]))
    }

    #[test]
    fn unreached_guard_gives_single_segment() {
        let field = VectorField::new(2, |_, dx| {
            dx[0] = 0.0;
            dx[1] = 1.0;
        });
        let guard = Guard::new(|x| x[0] - 1.0, Direction::Either);
        let sys = HybridSystem::new("never", field, guard, Reset::identity());
        let traj = hybrid_flow(&sys, &[0.0, 0.0], 5.0, &HybridOptions::default()).unwrap();
        assert_eq!(traj.segments.len(), 1);
        assert!(traj.impacts.is_empty());
        assert_eq!(traj.termination, Termination::TimeElapsed);
        assert_eq!(traj.t_total, 5.0);
    }

    #[test]
    fn sawtooth_impacts_and_post_impact_convention() {
        let sys = sawtooth_2d();
        let traj = hybrid_flow(&sys, &[0.0, 0.5], 3.5, &HybridOptions::default()).unwrap();
        assert_eq!(traj.impacts.len(), 3);
        for (k, ev) in traj.impacts.iter().enumerate() {
            assert!((ev.t - (k + 1) as f64).abs() < 1e-10);
            assert!(sys.guard.value(&ev.x_minus).abs() <= 1e-9);
            assert_eq!(ev.x_plus, sys.reset.apply(&ev.x_minus));
            // segment k ends at x-, segment k+1 starts at x+
            assert_eq!(traj.segments[k].end_state(), ev.x_minus.as_slice());
            assert_eq!(traj.segments[k + 1].start_state(), ev.x_plus.as_slice());
            assert_eq!(traj.segments[k + 1].t_start(), ev.t);
            assert_eq!(traj.state_at(ev.t).unwrap(), ev.x_plus);
        }
        let end = traj.final_state().unwrap();
        assert!((end[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_horizon_is_empty() {
        let traj =
            hybrid_flow(&sawtooth_2d(), &[0.0, 0.0], 0.0, &HybridOptions::default()).unwrap();
        assert!(traj.is_empty());
        assert!(traj.impacts.is_empty());
    }

    #[test]
    fn chained_resets_are_bounded() {
        // the reset lands back on the active part of S forever
        let field = VectorField::new(2, |_, dx| {
            dx[0] = 1.0;
            dx[1] = 0.0;
        });
        let guard = Guard::new(|x| x[0] - 1.0, Direction::NegativeToPositive);
        let reset = Reset::new(|x| vec![x[0], x[1] + 1.0]);
        let sys = HybridSystem::new("stuck", field, guard, reset);
        let traj = hybrid_flow(&sys, &[0.0, 0.0], 5.0, &HybridOptions::default()).unwrap();
        assert_eq!(traj.termination, Termination::ZenoSuspected);
        assert_eq!(traj.impacts.len(), 4);
    }

    #[test]
    fn accumulating_impacts_flag_zeno() {
        // bouncing ball with restitution 0.5: impact times accumulate at t = 3
        let field = VectorField::new(2, |x, dx| {
            dx[0] = x[1];
            dx[1] = -1.0;
        });
        let guard =
            Guard::new(|x| x[0], Direction::PositiveToNegative).with_gradient(|_| vec![1.0, 0.0]);
        let sys = HybridSystem::new("ball", field, guard, Reset::new(|x| vec![0.0, -0.5 * x[1]]));
        let traj = hybrid_flow(&sys, &[0.5, 0.0], 10.0, &HybridOptions::default()).unwrap();
        assert_eq!(traj.termination, Termination::ZenoSuspected);
        assert!(traj.t_total < 3.1);
    }

    #[test]
    fn leaving_domain_terminates() {
        let sys = sawtooth_2d().with_domain(|x| x[1] < 1.0);
        let sys = HybridSystem {
            reset: Reset::new(|x| vec![0.0, x[1] + 0.4]),
            ..sys
        };
        let traj = hybrid_flow(&sys, &[0.0, 0.5], 10.0, &HybridOptions::default()).unwrap();
        assert_eq!(traj.termination, Termination::LeftDomain);
        assert_eq!(traj.impacts.len(), 2);
    }

    #[test]
    fn blow_up_terminates() {
        let field = VectorField::new(1, |x, dx| dx[0] = x[0] * x[0]);
        let guard = Guard::new(|x| x[0] + 10.0, Direction::Either);
        let sys = HybridSystem::new("blowup", field, guard, Reset::identity());
        let traj = hybrid_flow(&sys, &[1.0], 5.0, &HybridOptions::default()).unwrap();
        assert_eq!(traj.termination, Termination::BlowUp);
        assert!(traj.t_total < 1.0 + 1e-6);
    }

    #[test]
    fn fixed_points_are_validated() {
        let sys = sawtooth_2d();
        assert!(sys.clone().with_fixed_points(vec![vec![0.0, 0.0]]).is_err());
        let field = VectorField::new(1, |x, dx| dx[0] = -x[0]);
        let guard = Guard::new(|x| x[0] - 5.0, Direction::Either);
        let ok = HybridSystem::new("decay", field, guard, Reset::identity())
            .with_fixed_points(vec![vec![0.0]])
            .unwrap();
        assert_eq!(ok.near_fixed_point(&[1e-4], 1e-3), Some(true));
        assert_eq!(sys.near_fixed_point(&[0.0, 0.0], 1e-3), None);
    }

    #[test]
    fn impact_sequence_counts() {
        let sys = sawtooth_2d();
        let (ev, term) = impact_sequence(&sys, &[0.0, 0.0], 0, &HybridOptions::default()).unwrap();
        assert!(ev.is_empty());
        assert_eq!(term, Termination::ImpactBudget);
        let (ev, term) = impact_sequence(&sys, &[0.0, 0.0], 7, &HybridOptions::default()).unwrap();
        assert_eq!(ev.len(), 7);
        assert_eq!(term, Termination::ImpactBudget);
    }

    #[test]
    fn csv_marks_pre_impact_rows() {
        let traj =
            hybrid_flow(&sawtooth_2d(), &[0.0, 0.0], 1.5, &HybridOptions::default()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x0,x1,segment_index,impact_flag");
        let flagged: Vec<&str> = lines.filter(|l| l.ends_with(",1")).collect();
        assert_eq!(flagged.len(), 1);
        assert!(flagged[0].starts_with("1.0000000000"));
    }

    #[test]
    fn identity_reset_flows_off_the_section() {
        let m = crate::models::vdp_continuous_model(&Default::default()).unwrap();
        let opts = HybridOptions::default().with_rel_tol(1e-10);
        let traj = hybrid_flow(&m.system, &m.x0, 20.0, &opts).unwrap();
        assert_eq!(traj.termination, Termination::TimeElapsed);
        assert_eq!(traj.impacts.len(), 4);
        assert_eq!(traj.impacts[0].t, 0.0);
        for e in &traj.impacts {
            assert_eq!(e.x_minus, e.x_plus);
        }
    }
}
