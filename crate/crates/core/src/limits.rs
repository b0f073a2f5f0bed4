//! Limit sets: classification of interval maps, cycles of maps on finite
//! sets, the one-dimensional hybrid driver and numerical omega-limit
//! estimates.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::guard::brent;
use crate::hybrid::{distance, hybrid_flow, HybridOptions, HybridSystem, Termination};
use crate::ode::{integrate, IntegrationEnd, State, VectorField};
use crate::poincare::SectionChart;

/// Equality tolerance for iterates of continuous maps, in chart units.
pub const CYCLE_TOL: f64 = 1e-8;
/// Consecutive agreeing iterates required before a cycle is declared.
pub const PERSISTENCE: usize = 10;
const MONOTONICITY_SAMPLES: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleKind {
    FixedPoint,
    Periodic,
    Divergent,
    Undecided,
}

/// Outcome of a limit-set search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleResult {
    pub kind: CycleKind,
    /// Cycle length in iterations (impacts for hybrid runs); 1 for fixed points.
    pub period: Option<usize>,
    /// The cycle, in order of visit.
    pub orbit: Vec<f64>,
    pub transient_length: usize,
    /// Two samples witnessing a failure of monotonicity, if any.
    pub injectivity_violation: Option<(f64, f64)>,
    /// Flow time around the cycle, for hybrid runs.
    pub period_time: Option<f64>,
    pub diagnostics: Option<Diagnostics1d>,
}

impl CycleResult {
    fn new(kind: CycleKind) -> Self {
        Self {
            kind,
            period: None,
            orbit: Vec::new(),
            transient_length: 0,
            injectivity_violation: None,
            period_time: None,
            diagnostics: None,
        }
    }

    fn cycle(orbit: Vec<f64>, transient: usize) -> Self {
        let k = orbit.len();
        Self {
            kind: if k == 1 {
                CycleKind::FixedPoint
            } else {
                CycleKind::Periodic
            },
            period: Some(k),
            orbit,
            transient_length: transient,
            ..Self::new(CycleKind::Undecided)
        }
    }

    pub fn is_cycle(&self) -> bool {
        matches!(self.kind, CycleKind::FixedPoint | CycleKind::Periodic)
    }
}

pub type ScalarMapFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A scalar map `P` on an interval `[a, b]`.
#[derive(Clone)]
pub struct DiscreteMap {
    map: Arc<ScalarMapFn>,
    pub domain: (f64, f64),
}

impl fmt::Debug for DiscreteMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteMap")
            .field("domain", &self.domain)
            .finish()
    }
}

impl DiscreteMap {
    pub fn new<F>(map: F, a: f64, b: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("bad interval [{a}, {b}]")));
        }
        Ok(Self {
            map: Arc::new(map),
            domain: (a, b),
        })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (self.map)(x)
    }

    fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        let (a, b) = self.domain;
        let n = MONOTONICITY_SAMPLES;
        (0..n).map(move |i| a + (b - a) * i as f64 / (n - 1) as f64)
    }

    /// Whether the sampled images stay in the domain.
    pub fn maps_into_itself(&self) -> bool {
        let (a, b) = self.domain;
        let slack = 1e-12 * (b - a);
        self.samples().all(|x| {
            let y = self.apply(x);
            y >= a - slack && y <= b + slack
        })
    }

    /// First pair of consecutive samples where the map stops being strictly
    /// monotone.
    pub fn monotonicity_violation(&self) -> Option<(f64, f64)> {
        let xs: Vec<f64> = self.samples().collect();
        let ys: Vec<f64> = xs.iter().map(|&x| self.apply(x)).collect();
        let sign = (ys[1] - ys[0]).signum();
        if ys[1] == ys[0] {
            return Some((xs[0], xs[1]));
        }
        for i in 1..xs.len() - 1 {
            let d = ys[i + 1] - ys[i];
            if d == 0.0 || d.signum() != sign {
                return Some((xs[i], xs[i + 1]));
            }
        }
        None
    }
}

/// Smallest `k <= max_k` with `|x[n+k] - x[n]| < tol` over the last
/// `PERSISTENCE` indices; returns `(k, first index of the persistent run)`.
fn detect_period(
    seq: &[f64],
    max_k: usize,
    tol: f64,
    periodic: Option<f64>,
) -> Option<(usize, usize)> {
    let diff = |a: f64, b: f64| match periodic {
        Some(p) => {
            let d = b - a;
            (d - p * (d / p).round()).abs()
        }
        None => (b - a).abs(),
    };
    for k in 1..=max_k {
        if seq.len() < k + PERSISTENCE {
            break;
        }
        let n = seq.len();
        let tail_ok = (n - k - PERSISTENCE..n - k).all(|i| diff(seq[i], seq[i + k]) < tol);
        if tail_ok {
            let mut start = n - k - PERSISTENCE;
            while start > 0 && diff(seq[start - 1], seq[start - 1 + k]) < tol {
                start -= 1;
            }
            return Some((k, start));
        }
    }
    None
}

/// Iterate `P` from `x0` and classify the orbit as a fixed point or a
/// two-cycle, the only possibilities for a monotone interval map.
///
/// The map is also sampled for monotonicity. When that fails the result
/// carries the witness and longer cycles are searched for too.
pub fn classify_interval_map(map: &DiscreteMap, x0: f64, n_max: usize, tol: f64) -> CycleResult {
    let violation = map.monotonicity_violation();
    let max_k = if violation.is_some() { 64 } else { 2 };
    let (a, b) = map.domain;
    let slack = 1e-9 * (b - a);
    let mut seq = vec![x0];
    let mut x = x0;
    let mut result = CycleResult::new(CycleKind::Undecided);
    for _ in 0..n_max {
        x = map.apply(x);
        if !x.is_finite() || x < a - slack || x > b + slack {
            result = CycleResult::new(CycleKind::Divergent);
            result.orbit = vec![x];
            break;
        }
        seq.push(x);
        if seq.len() % 8 == 0 || seq.len() == n_max + 1 {
            if let Some((k, start)) = detect_period(&seq, max_k, tol, None) {
                let n = seq.len();
                result = CycleResult::cycle(seq[n - k..].to_vec(), start);
                break;
            }
        }
    }
    if result.kind == CycleKind::Undecided {
        if let Some((k, start)) = detect_period(&seq, max_k, tol, None) {
            let n = seq.len();
            result = CycleResult::cycle(seq[n - k..].to_vec(), start);
        }
    }
    result.injectivity_violation = violation;
    result
}

/// A finite, uniformly separated set of section points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteImpactSet {
    points: Vec<f64>,
    separation: f64,
}

impl FiniteImpactSet {
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(
                "impact set must be non-empty and finite".into(),
            ));
        }
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let separation = points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if !(separation > 0.0) {
            return Err(Error::InvalidArgument(
                "impact set points must be distinct".into(),
            ));
        }
        Ok(Self { points, separation })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Minimum gap between members; infinite for a single point.
    pub fn separation(&self) -> f64 {
        self.separation
    }

    /// Index of the member within half the separation of `value`.
    pub fn snap(&self, value: f64) -> Result<usize> {
        let radius = 0.5 * self.separation;
        let (idx, d) = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - value).abs()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if d < radius {
            Ok(idx)
        } else {
            Err(Error::SnapFailure {
                image: value,
                radius,
            })
        }
    }
}

/// Cycle of a map on a finite set reached from `s0`, found with a table of
/// first-visit positions. Images are snapped to the nearest member.
pub fn detect_cycle_finite<M>(
    set: &FiniteImpactSet,
    mut map: M,
    s0: f64,
    n_max: usize,
) -> Result<CycleResult>
where
    M: FnMut(f64) -> Result<f64>,
{
    let mut first_visit: Vec<Option<usize>> = vec![None; set.len()];
    let mut path = Vec::new();
    let mut idx = set.snap(s0)?;
    for step in 0..=n_max {
        if let Some(first) = first_visit[idx] {
            let orbit = path[first..].iter().map(|&i| set.points[i]).collect();
            return Ok(CycleResult::cycle(orbit, first));
        }
        first_visit[idx] = Some(step);
        path.push(idx);
        idx = set.snap(map(set.points[idx])?)?;
    }
    Ok(CycleResult::new(CycleKind::Undecided))
}

// ------------------------------------------------------------ 1-D hybrid runs

/// A one-dimensional hybrid system whose impact set is a finite union of
/// closed intervals (single points allowed).
#[derive(Clone)]
pub struct Hybrid1d {
    pub field: VectorField,
    pub surface: Vec<(f64, f64)>,
    reset: Arc<ScalarMapFn>,
    /// Compact forward-invariant region `R`.
    pub region: (f64, f64),
    pub fixed_points: Option<Vec<f64>>,
}

impl fmt::Debug for Hybrid1d {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hybrid1d")
            .field("surface", &self.surface)
            .field("region", &self.region)
            .field("fixed_points", &self.fixed_points)
            .finish()
    }
}

impl Hybrid1d {
    pub fn new<F>(
        field: VectorField,
        surface: Vec<(f64, f64)>,
        reset: F,
        region: (f64, f64),
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if field.dimension() != 1 {
            return Err(Error::InvalidArgument(
                "field must be one-dimensional".into(),
            ));
        }
        if surface.is_empty() || surface.iter().any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidArgument(
                "impact set must be a non-empty list of intervals [a, b]".into(),
            ));
        }
        if !(region.0 < region.1) {
            return Err(Error::InvalidArgument("region must be an interval".into()));
        }
        Ok(Self {
            field,
            surface,
            reset: Arc::new(reset),
            region,
            fixed_points: None,
        })
    }

    pub fn with_fixed_points(mut self, points: Vec<f64>) -> Self {
        self.fixed_points = Some(points);
        self
    }

    pub fn reset(&self, s: f64) -> f64 {
        (self.reset)(s)
    }

    fn in_surface(&self, x: f64) -> bool {
        self.surface
            .iter()
            .any(|&(a, b)| x >= a - 1e-12 && x <= b + 1e-12)
    }

    /// Points where an orbit enters the impact set.
    pub fn entry_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.surface.iter().flat_map(|&(a, b)| [a, b]).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    }

    fn distance_to_surface(&self, y: f64) -> f64 {
        self.surface
            .iter()
            .map(|&(a, b)| {
                if y < a {
                    a - y
                } else if y > b {
                    y - b
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Quantities behind the lower bound on inter-impact times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics1d {
    /// Smallest distance from a reset image to the impact set.
    pub eta: Option<f64>,
    /// Largest speed `|f|` over the region.
    pub xi: f64,
    /// `eta / xi`, when `eta` is available.
    pub min_time_bound: Option<f64>,
    pub min_impact_interval: f64,
    /// Smallest distance from the orbit to a supplied fixed point of `f`.
    pub min_fixed_point_distance: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Leg {
    time: f64,
    impact: f64,
    min_fixed_distance: f64,
}

/// Flow from `x` to the next entry of the impact set.
fn leg_1d(sys: &Hybrid1d, x: f64, opts: &HybridOptions) -> Result<Leg> {
    let speed = sys.field.eval(&[x])[0];
    if speed == 0.0 {
        return Err(Error::ApproachesFixedPoint { distance: 0.0 });
    }
    let ahead: Vec<f64> = sys
        .entry_points()
        .into_iter()
        .filter(|&e| if speed > 0.0 { e > x } else { e < x })
        .collect();
    let target = if speed > 0.0 {
        ahead.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        ahead.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    let fixed_dist = |y: f64| {
        sys.fixed_points.as_ref().map_or(f64::INFINITY, |fp| {
            fp.iter()
                .map(|p| (p - y).abs())
                .fold(f64::INFINITY, f64::min)
        })
    };
    if let Some(fp) = &sys.fixed_points {
        // a zero of f between x and the target blocks the leg
        for &p in fp {
            let between = if speed > 0.0 {
                p > x && p < target
            } else {
                p < x && p > target
            };
            if between {
                return Err(Error::ApproachesFixedPoint {
                    distance: (p - x).abs(),
                });
            }
        }
    }
    let (lo, hi) = sys.region;
    let mut hit = None;
    let mut left = false;
    let mut min_fd = fixed_dist(x);
    let outcome = integrate(
        &sys.field,
        &[x],
        0.0,
        opts.impact_horizon,
        &opts.integrator,
        |seg| {
            let k = seg.num_steps() - 1;
            let (t0, t1) = seg.step_interval(k);
            let x1 = seg.end_state()[0];
            if target.is_finite() && (x1 - target) * speed >= 0.0 {
                let t_star = if x1 == target {
                    t1
                } else {
                    brent(
                        |t| seg.eval_in_step(k, t)[0] - target,
                        t0,
                        t1,
                        opts.t_tol,
                        opts.h_tol,
                        200,
                    )?
                };
                hit = Some(t_star);
                min_fd = min_fd.min(fixed_dist(target));
                return Ok(Some((t_star, vec![target])));
            }
            min_fd = min_fd.min(fixed_dist(x1));
            if x1 < lo || x1 > hi {
                left = true;
                return Ok(Some((t1, vec![x1])));
            }
            Ok(None)
        },
    )?;
    match outcome.end {
        IntegrationEnd::Stopped if hit.is_some() => Ok(Leg {
            time: hit.unwrap(),
            impact: target,
            min_fixed_distance: min_fd,
        }),
        IntegrationEnd::Stopped => Err(Error::LeftDomain {
            t: outcome.segment.t_end(),
        }),
        IntegrationEnd::Completed => {
            let end = outcome.segment.end_state()[0];
            if min_fd.is_finite() && min_fd < 1e-3 {
                Err(Error::ApproachesFixedPoint { distance: min_fd })
            } else if sys.field.eval(&[end])[0].abs() < 1e-8 {
                Err(Error::ApproachesFixedPoint { distance: 0.0 })
            } else {
                Err(Error::NoImpact {
                    horizon: opts.impact_horizon,
                })
            }
        }
        IntegrationEnd::Failed(e) => Err(e),
    }
}

/// Run a one-dimensional hybrid orbit until its impact points repeat.
///
/// Impact points are entry points of the impact set, so the induced map on
/// them lives on a finite set and the search terminates within the
/// pigeonhole bound.
pub fn hybrid_1d_run(sys: &Hybrid1d, x0: f64, opts: &HybridOptions) -> Result<CycleResult> {
    let (lo, hi) = sys.region;
    if !(x0 >= lo && x0 <= hi) {
        return Err(Error::InvalidArgument(format!(
            "{x0} is outside the region"
        )));
    }
    let set = FiniteImpactSet::new(sys.entry_points())?;
    let mut leg_cache: HashMap<u64, (f64, Leg)> = HashMap::new();
    let mut min_fd = f64::INFINITY;
    let mut min_interval = f64::INFINITY;

    // reach the first impact
    let (first, lead_in) = if sys.in_surface(x0) {
        (x0, 0usize)
    } else {
        let leg = leg_1d(sys, x0, opts)?;
        min_fd = min_fd.min(leg.min_fixed_distance);
        (leg.impact, 1)
    };

    let mut next_impact = |s: f64| -> Result<f64> {
        let key = s.to_bits();
        if let Some((_, leg)) = leg_cache.get(&key) {
            return Ok(leg.impact);
        }
        let mut y = sys.reset(s);
        let mut chained = 0;
        while sys.in_surface(y) {
            chained += 1;
            if chained > opts.max_chained_resets {
                return Err(Error::ZenoSuspected {
                    impacts: chained,
                    t: 0.0,
                });
            }
            y = sys.reset(y);
        }
        if y < lo || y > hi {
            return Err(Error::LeftDomain { t: 0.0 });
        }
        let leg = leg_1d(sys, y, opts)?;
        leg_cache.insert(key, (y, leg));
        Ok(leg.impact)
    };
    let mut result = detect_cycle_finite(&set, &mut next_impact, first, set.len() + 1)?;
    result.transient_length += lead_in;

    for leg in leg_cache.values().map(|(_, l)| l) {
        min_fd = min_fd.min(leg.min_fixed_distance);
        min_interval = min_interval.min(leg.time);
    }
    if result.is_cycle() {
        let period_time: f64 = result
            .orbit
            .iter()
            .map(|s| leg_cache[&s.to_bits()].1.time)
            .sum();
        result.period_time = Some(period_time);
    }

    // eta over impact points, xi over the region
    let eta = set
        .points()
        .iter()
        .map(|&s| sys.distance_to_surface(sys.reset(s)))
        .fold(f64::INFINITY, f64::min);
    let xi = (0..=1000)
        .map(|i| lo + (hi - lo) * i as f64 / 1000.0)
        .map(|x| sys.field.eval(&[x])[0].abs())
        .fold(0.0, f64::max);
    let eta = (eta.is_finite() && eta > 0.0).then_some(eta);
    result.diagnostics = Some(Diagnostics1d {
        eta,
        xi,
        min_time_bound: eta.map(|e| e / xi),
        min_impact_interval: min_interval,
        min_fixed_point_distance: sys.fixed_points.as_ref().map(|_| min_fd),
    });
    Ok(result)
}

// ------------------------------------------------------- omega-limit estimate

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaOptions {
    /// Tolerance on recurrent section values.
    pub tol: f64,
    pub max_period: usize,
    /// Bins used to measure how much of the section the crossings cover.
    pub bins: usize,
    /// Fraction of bins above which the crossings count as filling the section.
    pub dense_fraction: f64,
    /// Cap on the number of cloud points kept.
    pub max_cloud: usize,
}

impl Default for OmegaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_period: 16,
            bins: 64,
            dense_fraction: 0.5,
            max_cloud: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaEstimate {
    /// Sampled `(t, state)` pairs of the window.
    pub cloud: Vec<(f64, State)>,
    /// Chart coordinates of the pre-impact states in the window.
    pub section: Vec<f64>,
    pub cycle: CycleResult,
    pub dense_fill: bool,
    /// Fraction of section bins visited.
    pub coverage: f64,
}

/// Estimate the omega-limit set of `x0` from the window
/// `[t_transient, t_transient + t_window]` of its hybrid orbit.
pub fn omega_estimate(
    sys: &HybridSystem,
    chart: Option<&SectionChart>,
    x0: &[f64],
    t_transient: f64,
    t_window: f64,
    opts: &HybridOptions,
    oopts: &OmegaOptions,
) -> Result<OmegaEstimate> {
    let traj = hybrid_flow(sys, x0, t_transient + t_window, opts)?;
    match traj.termination {
        Termination::BlowUp => {
            return Err(Error::NonFinite { t: traj.t_total });
        }
        Termination::LeftDomain => return Err(Error::LeftDomain { t: traj.t_total }),
        Termination::ZenoSuspected => {
            return Err(Error::ZenoSuspected {
                impacts: traj.impacts.len(),
                t: traj.t_total,
            })
        }
        _ => {}
    }
    let mut cloud: Vec<(f64, State)> = traj
        .segments
        .iter()
        .flat_map(|s| s.nodes())
        .filter(|(t, _)| *t >= t_transient)
        .map(|(t, x)| (t, x.to_vec()))
        .collect();
    if cloud.len() > oopts.max_cloud {
        let stride = cloud.len().div_ceil(oopts.max_cloud);
        cloud = cloud.into_iter().step_by(stride).collect();
    }
    let window: Vec<_> = traj.impacts.iter().filter(|e| e.t >= t_transient).collect();
    let mut section = Vec::new();
    let mut cycle = CycleResult::new(CycleKind::Undecided);
    let mut dense_fill = false;
    let mut coverage = 0.0;

    if let (Some(chart), false) = (chart, window.is_empty()) {
        section = window
            .iter()
            .map(|e| chart.coordinate(&e.x_minus))
            .collect();
        let period = chart.period();
        if let Some((k, start)) = detect_period(&section, oopts.max_period, oopts.tol, period) {
            let n = section.len();
            cycle = CycleResult::cycle(section[n - k..].to_vec(), start);
            let last = &window[window.len() - 1 - k..];
            cycle.period_time = Some(last[k].t - last[0].t);
        } else {
            let (lo, hi, wrap) = match period {
                Some(p) => (-0.5 * p, 0.5 * p, true),
                None => (
                    section.iter().copied().fold(f64::INFINITY, f64::min),
                    section.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    false,
                ),
            };
            let mut bins = vec![false; oopts.bins];
            if hi > lo {
                for &s in &section {
                    let u = if wrap {
                        (s - lo).rem_euclid(hi - lo) / (hi - lo)
                    } else {
                        (s - lo) / (hi - lo)
                    };
                    let b = ((u * oopts.bins as f64) as usize).min(oopts.bins - 1);
                    bins[b] = true;
                }
            }
            coverage = bins.iter().filter(|b| **b).count() as f64 / oopts.bins as f64;
            dense_fill = wrap && coverage >= oopts.dense_fraction;
        }
    } else if window.is_empty() && !cloud.is_empty() {
        let first = &cloud[0].1;
        let diameter = cloud
            .iter()
            .map(|(_, x)| distance(x, first))
            .fold(0.0, f64::max);
        if diameter < oopts.tol {
            cycle = CycleResult::cycle(cloud.last().unwrap().1.clone(), 0);
            cycle.kind = CycleKind::FixedPoint;
            cycle.period = Some(1);
        }
    }
    Ok(OmegaEstimate {
        cloud,
        section,
        cycle,
        dense_fill,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guard::{Direction, Guard};
    use crate::hybrid::Reset;
    use crate::models::{annulus_model, vdp_model, VdpHybridParams};

    #[test]
    fn contraction_has_fixed_point() {
        let m = DiscreteMap::new(|x| x / 2.0 + 1.0, 0.0, 4.0).unwrap();
        assert!(m.maps_into_itself());
        let r = classify_interval_map(&m, 0.0, 1000, CYCLE_TOL);
        assert_eq!(r.kind, CycleKind::FixedPoint);
        assert!((r.orbit[0] - 2.0).abs() < 1e-8);
        assert!(r.injectivity_violation.is_none());
    }

    #[test]
    fn reflection_has_two_cycle() {
        let m = DiscreteMap::new(|x| -x, -1.0, 1.0).unwrap();
        let r = classify_interval_map(&m, 0.7, 1000, CYCLE_TOL);
        assert_eq!(r.kind, CycleKind::Periodic);
        assert_eq!(r.period, Some(2));
        let mut orbit = r.orbit.clone();
        orbit.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(orbit, vec![-0.7, 0.7]);
        assert_eq!(r.transient_length, 0);
    }

    #[test]
    fn logistic_map_flags_injectivity() {
        let m = DiscreteMap::new(|x| 4.0 * x * (1.0 - x), 0.0, 1.0).unwrap();
        let r = classify_interval_map(&m, 0.3, 2000, CYCLE_TOL);
        assert_eq!(r.kind, CycleKind::Undecided);
        let (a, b) = r.injectivity_violation.unwrap();
        assert!(a <= 0.5 && b >= 0.5);
    }

    #[test]
    fn leaving_the_interval_is_divergent() {
        let m = DiscreteMap::new(|x| 2.0 * x, 0.0, 1.0).unwrap();
        assert!(!m.maps_into_itself());
        let r = classify_interval_map(&m, 0.3, 100, CYCLE_TOL);
        assert_eq!(r.kind, CycleKind::Divergent);
    }

    #[test]
    fn finite_set_examples() {
        let single = FiniteImpactSet::new(vec![5.0]).unwrap();
        let r = detect_cycle_finite(&single, Ok, 5.0, 2).unwrap();
        assert_eq!(r.kind, CycleKind::FixedPoint);
        assert_eq!(r.transient_length, 0);

        let set = FiniteImpactSet::new(vec![1.0, 2.0, 3.0]).unwrap();
        let m = |s: f64| {
            Ok(if s == 1.0 {
                2.0
            } else if s == 2.0 {
                3.0
            } else {
                2.0
            })
        };
        let r = detect_cycle_finite(&set, m, 1.0, 4).unwrap();
        assert_eq!(r.period, Some(2));
        assert_eq!(r.orbit, vec![2.0, 3.0]);
        assert_eq!(r.transient_length, 1);
    }

    #[test]
    fn snapping_enforces_half_separation() {
        let set = FiniteImpactSet::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(set.snap(0.9).unwrap(), 1);
        assert!(matches!(set.snap(0.5), Err(Error::SnapFailure { .. })));
        assert!(FiniteImpactSet::new(vec![1.0, 1.0]).is_err());
    }

    fn constant_speed() -> VectorField {
        VectorField::new(1, |_, dx| dx[0] = 1.0)
    }

    #[test]
    fn sawtooth_1d() {
        let sys = Hybrid1d::new(constant_speed(), vec![(1.0, 1.0)], |_| 0.0, (0.0, 1.0)).unwrap();
        let r = hybrid_1d_run(&sys, 0.0, &HybridOptions::default()).unwrap();
        assert_eq!(r.kind, CycleKind::FixedPoint);
        assert_eq!(r.orbit, vec![1.0]);
        assert!((r.period_time.unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_point_impact_set() {
        let sys = Hybrid1d::new(
            constant_speed(),
            vec![(1.0, 1.0), (2.0, 2.0)],
            |s| if s == 1.0 { 1.5 } else { 0.0 },
            (0.0, 2.0),
        )
        .unwrap();
        let r = hybrid_1d_run(&sys, 0.0, &HybridOptions::default()).unwrap();
        assert_eq!(r.period, Some(2));
        assert_eq!(r.orbit, vec![1.0, 2.0]);
        assert!((r.period_time.unwrap() - 1.5).abs() < 1e-10);
    }

    #[test]
    fn relaxation_leg_takes_ln_two() {
        let field = VectorField::new(1, |x, dx| dx[0] = 2.0 - x[0]);
        let sys = Hybrid1d::new(field, vec![(1.0, 1.0)], |_| 0.0, (0.0, 1.5))
            .unwrap()
            .with_fixed_points(vec![2.0]);
        let opts = HybridOptions::default().with_rel_tol(1e-11);
        let r = hybrid_1d_run(&sys, 0.0, &opts).unwrap();
        assert_eq!(r.kind, CycleKind::FixedPoint);
        assert!((r.period_time.unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
        let d = r.diagnostics.unwrap();
        assert!(d.min_impact_interval >= d.min_time_bound.unwrap());
        assert!((d.min_fixed_point_distance.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn blocked_by_fixed_point() {
        let field = VectorField::new(1, |x, dx| dx[0] = 0.5 - x[0]);
        let sys = Hybrid1d::new(field, vec![(1.0, 1.0)], |_| 0.0, (0.0, 1.5))
            .unwrap()
            .with_fixed_points(vec![0.5]);
        assert!(matches!(
            hybrid_1d_run(&sys, 0.0, &HybridOptions::default()),
            Err(Error::ApproachesFixedPoint { .. })
        ));
    }

    #[test]
    fn vdp_omega_is_a_single_impact_point() {
        let m = vdp_model(&VdpHybridParams::default()).unwrap();
        let opts = HybridOptions::default().with_rel_tol(1e-10);
        let est = omega_estimate(
            &m.system,
            Some(&m.chart),
            &m.x0,
            100.0,
            60.0,
            &opts,
            &OmegaOptions::default(),
        )
        .unwrap();
        assert_eq!(est.cycle.kind, CycleKind::FixedPoint);
        assert!((est.cycle.orbit[0] + 1.0498).abs() < 5e-3);
    }

    #[test]
    fn annulus_fills_the_section() {
        let m = annulus_model();
        let est = omega_estimate(
            &m.system,
            Some(&m.chart),
            &m.x0,
            10.0,
            400.0,
            &HybridOptions::default(),
            &OmegaOptions::default(),
        )
        .unwrap();
        assert!(!est.cycle.is_cycle());
        assert!(est.dense_fill);
    }

    #[test]
    fn reset_free_decay_has_point_limit() {
        let field = VectorField::new(1, |x, dx| dx[0] = -x[0]);
        let guard = Guard::new(|x| x[0] - 10.0, Direction::Either);
        let sys = HybridSystem::new("decay", field, guard, Reset::identity());
        let est = omega_estimate(
            &sys,
            None,
            &[1.0],
            40.0,
            10.0,
            &HybridOptions::default(),
            &OmegaOptions::default(),
        )
        .unwrap();
        assert_eq!(est.cycle.kind, CycleKind::FixedPoint);
        assert!(est.cycle.orbit[0].abs() < 1e-6);
    }
}
