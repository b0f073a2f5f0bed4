//! Return maps on the impact surface and the stability factor of a hybrid
//! periodic orbit.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::guard::{signed_sine, transversality, CrossingScanner, SectionFrame};
use crate::hybrid::{distance, norm, HybridOptions, HybridSystem};
use crate::ode::{divergence_integral, integrate, ContinuousSegment, IntegrationEnd, State};

/// Chart step for derivatives of the reset along the section.
pub const RESET_FD_STEP: f64 = 1e-6;
/// Chart step for finite differences of the return map.
pub const RETURN_MAP_FD_STEP: f64 = 1e-5;
/// Fixed-point residual accepted by the solver.
pub const FIXED_POINT_RESIDUAL: f64 = 1e-10;
/// Residual above which a chart point is not treated as a fixed point.
pub const NOT_FIXED_TOL: f64 = 1e-6;
/// Sines below this magnitude make the stability formula meaningless.
pub const DEGENERATE_SINE: f64 = 1e-8;
/// Half-width of the band around 1 classified as marginal.
pub const DEFAULT_MARGIN: f64 = 1e-6;
const MAX_SOLVER_ITER: usize = 100;

pub type ChartPointFn = dyn Fn(f64) -> State + Send + Sync;
pub type ChartCoordFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Scalar parametrization `s -> chart(s)` of a curve on the impact surface.
#[derive(Clone)]
pub enum SectionChart {
    /// `origin + s * direction`.
    Line { origin: State, direction: State },
    /// `center + radius (cos s, sin s)`.
    Circle { center: [f64; 2], radius: f64 },
    Custom {
        point: Arc<ChartPointFn>,
        coordinate: Arc<ChartCoordFn>,
    },
}

impl fmt::Debug for SectionChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Line { origin, direction } => f
                .debug_struct("Line")
                .field("origin", origin)
                .field("direction", direction)
                .finish(),
            Self::Circle { center, radius } => f
                .debug_struct("Circle")
                .field("center", center)
                .field("radius", radius)
                .finish(),
            Self::Custom { .. } => f.write_str("Custom"),
        }
    }
}

impl SectionChart {
    pub fn line(origin: State, direction: State) -> Self {
        Self::Line { origin, direction }
    }

    pub fn circle(center: [f64; 2], radius: f64) -> Self {
        Self::Circle { center, radius }
    }

    pub fn custom<P, C>(point: P, coordinate: C) -> Self
    where
        P: Fn(f64) -> State + Send + Sync + 'static,
        C: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::Custom {
            point: Arc::new(point),
            coordinate: Arc::new(coordinate),
        }
    }

    pub fn point(&self, s: f64) -> State {
        match self {
            Self::Line { origin, direction } => origin
                .iter()
                .zip(direction)
                .map(|(o, d)| o + s * d)
                .collect(),
            Self::Circle { center, radius } => {
                vec![center[0] + radius * s.cos(), center[1] + radius * s.sin()]
            }
            Self::Custom { point, .. } => point(s),
        }
    }

    /// Inverse chart; exact for points on the chart curve.
    pub fn coordinate(&self, x: &[f64]) -> f64 {
        match self {
            Self::Line { origin, direction } => {
                let dd: f64 = direction.iter().map(|d| d * d).sum();
                x.iter()
                    .zip(origin)
                    .zip(direction)
                    .map(|((x, o), d)| (x - o) * d)
                    .sum::<f64>()
                    / dd
            }
            Self::Circle { center, .. } => (x[1] - center[1]).atan2(x[0] - center[0]),
            Self::Custom { coordinate, .. } => coordinate(x),
        }
    }

    /// Chart coordinates repeat with this period, if any.
    pub fn period(&self) -> Option<f64> {
        match self {
            Self::Circle { .. } => Some(std::f64::consts::TAU),
            _ => None,
        }
    }

    /// `d chart / ds`.
    pub fn tangent(&self, s: f64) -> State {
        match self {
            Self::Line { direction, .. } => direction.clone(),
            Self::Circle { radius, .. } => vec![-radius * s.sin(), radius * s.cos()],
            Self::Custom { point, .. } => {
                let h = RESET_FD_STEP;
                let (a, b) = (point(s + h), point(s - h));
                a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            }
        }
    }

    /// Planar frame of the section at `chart(s)`, tangent along increasing `s`.
    pub fn frame(&self, s: f64) -> Result<SectionFrame> {
        let x = self.point(s);
        let t = self.tangent(s);
        if t.len() != 2 {
            return Err(Error::InvalidArgument("section frames are planar".into()));
        }
        SectionFrame::from_tangent(&x, [t[0], t[1]])
    }

    /// Signed chart difference `b - a`, wrapped for periodic charts.
    pub fn difference(&self, a: f64, b: f64) -> f64 {
        let d = b - a;
        match self.period() {
            Some(p) => d - p * (d / p).round(),
            None => d,
        }
    }
}

/// `d/ds Delta(chart(s))`.
pub fn reset_tangent(sys: &HybridSystem, chart: &SectionChart, s: f64) -> State {
    let x = chart.point(s);
    if let Some(v) = sys.reset.derivative_along(&x, &chart.tangent(s)) {
        return v;
    }
    let h = RESET_FD_STEP;
    let a = sys.reset.apply(&chart.point(s + h));
    let b = sys.reset.apply(&chart.point(s - h));
    a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// Frame of the image curve `Delta(S)` at `Delta(chart(s))`, tangent along
/// the image of increasing `s`.
pub fn image_frame(sys: &HybridSystem, chart: &SectionChart, s: f64) -> Result<SectionFrame> {
    let y = sys.reset.apply(&chart.point(s));
    let t = reset_tangent(sys, chart, s);
    if t.len() != 2 {
        return Err(Error::InvalidArgument("section frames are planar".into()));
    }
    SectionFrame::from_tangent(&y, [t[0], t[1]])
}

/// One application of the return map `P`.
#[derive(Debug, Clone)]
pub struct ReturnMapResult {
    pub x_in: State,
    pub y: State,
    pub tau: f64,
    pub x_out: State,
    /// The continuous excursion from `y` to `x_out`.
    pub excursion: ContinuousSegment,
}

/// First impact of the flow started at `y`, excluding a crossing at `t = 0`.
pub fn time_to_impact(
    sys: &HybridSystem,
    y: &[f64],
    opts: &HybridOptions,
) -> Result<(f64, State, ContinuousSegment)> {
    if y.len() != sys.dimension() {
        return Err(Error::InvalidArgument("state dimension mismatch".into()));
    }
    let guard = &sys.guard;
    let h0 = guard.value(y);
    let initial = if h0.abs() <= opts.h_tol {
        let rate = transversality(&sys.field, guard, y);
        if rate == 0.0 {
            return Err(Error::DegenerateAngle { sine: 0.0 });
        }
        Some((0.0, rate.signum()))
    } else {
        Some((0.0, h0.signum()))
    };
    let mut scanner = CrossingScanner::new(guard.direction(), initial);
    let mut left_domain = false;
    let outcome = integrate(
        &sys.field,
        y,
        0.0,
        opts.impact_horizon,
        &opts.integrator,
        |seg| {
            let k = seg.num_steps() - 1;
            if let Some(b) = scanner.scan_step(guard, seg, k) {
                let hit = crate::guard::refine_crossing(guard, seg, &b, opts.t_tol, opts.h_tol)?;
                return Ok(Some(hit));
            }
            if !sys.in_domain(seg.end_state()) {
                left_domain = true;
                return Ok(Some((seg.t_end(), seg.end_state().to_vec())));
            }
            Ok(None)
        },
    )?;
    match outcome.end {
        IntegrationEnd::Completed => Err(Error::NoImpact {
            horizon: opts.impact_horizon,
        }),
        IntegrationEnd::Failed(e) => Err(e),
        IntegrationEnd::Stopped if left_domain => Err(Error::LeftDomain {
            t: outcome.segment.t_end(),
        }),
        IntegrationEnd::Stopped => {
            let seg = outcome.segment;
            let tau = seg.t_end();
            if tau < opts.min_impact_gap {
                return Err(Error::ZenoSuspected { impacts: 1, t: tau });
            }
            let x = seg.end_state().to_vec();
            Ok((tau, x, seg))
        }
    }
}

/// `P(x)`: reset, then flow to the next impact.
pub fn return_map(sys: &HybridSystem, x: &[f64], opts: &HybridOptions) -> Result<ReturnMapResult> {
    let residual = sys.guard.value(x).abs();
    if residual > opts.h_tol {
        return Err(Error::NotOnSection {
            at: x.to_vec(),
            residual,
        });
    }
    let y = sys.reset.apply(x);
    let (tau, x_out, excursion) = time_to_impact(sys, &y, opts)?;
    Ok(ReturnMapResult {
        x_in: x.to_vec(),
        y,
        tau,
        x_out,
        excursion,
    })
}

/// The return map in chart coordinates, iterated `n` times.
pub fn return_map_chart(
    sys: &HybridSystem,
    chart: &SectionChart,
    s: f64,
    n: usize,
    opts: &HybridOptions,
) -> Result<f64> {
    let mut x = chart.point(s);
    for _ in 0..n {
        x = return_map(sys, &x, opts)?.x_out;
    }
    Ok(chart.coordinate(&x))
}

/// Solve `P(s) = s` in chart coordinates.
pub fn find_fixed_point(
    sys: &HybridSystem,
    chart: &SectionChart,
    s_guess: f64,
    opts: &HybridOptions,
) -> Result<f64> {
    find_periodic_point(sys, chart, s_guess, 1, opts)
}

/// Solve `P^n(s) = s`: secant iteration, falling back to bisection on a
/// sign-change bracket of `P^n(s) - s`.
pub fn find_periodic_point(
    sys: &HybridSystem,
    chart: &SectionChart,
    s_guess: f64,
    n: usize,
    opts: &HybridOptions,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("period must be positive".into()));
    }
    let g = |s: f64| -> Result<f64> {
        let p = return_map_chart(sys, chart, s, n, opts)?;
        Ok(chart.difference(s, p))
    };
    let mut bracket: Option<(f64, f64, f64, f64)> = None;
    let note = |a: f64, ga: f64, b: f64, gb: f64, br: &mut Option<(f64, f64, f64, f64)>| {
        if ga.signum() != gb.signum() {
            let w = (b - a).abs();
            if br.is_none_or(|(x, _, y, _)| w < (y - x).abs()) {
                *br = Some(if a < b {
                    (a, ga, b, gb)
                } else {
                    (b, gb, a, ga)
                });
            }
        }
    };

    let mut s0 = s_guess;
    let mut g0 = g(s0)?;
    if g0.abs() <= FIXED_POINT_RESIDUAL {
        return Ok(s0);
    }
    let mut s1 = s0 + 1e-4 * s0.abs().max(1.0);
    let mut g1 = match g(s1) {
        Ok(v) => v,
        Err(_) => {
            s1 = s0 - 1e-4 * s0.abs().max(1.0);
            g(s1)?
        }
    };
    note(s0, g0, s1, g1, &mut bracket);
    let mut best = if g1.abs() < g0.abs() {
        (s1, g1)
    } else {
        (s0, g0)
    };
    let mut iter = 2;
    let mut stalls = 0;

    while iter < MAX_SOLVER_ITER {
        if best.1.abs() <= FIXED_POINT_RESIDUAL {
            return Ok(best.0);
        }
        if bracket.is_some() && stalls >= 3 {
            break;
        }
        let denom = g1 - g0;
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let mut s2 = s1 - g1 * (s1 - s0) / denom;
        if let Some((a, _, b, _)) = bracket {
            if !(s2 > a && s2 < b) {
                s2 = 0.5 * (a + b);
            }
        }
        iter += 1;
        let g2 = match g(s2) {
            Ok(v) => v,
            Err(e) => {
                if bracket.is_some() {
                    break;
                }
                return Err(e);
            }
        };
        note(s1, g1, s2, g2, &mut bracket);
        if g2.abs() < best.1.abs() {
            best = (s2, g2);
            stalls = 0;
        } else {
            stalls += 1;
        }
        s0 = s1;
        g0 = g1;
        s1 = s2;
        g1 = g2;
    }
    if best.1.abs() <= FIXED_POINT_RESIDUAL {
        return Ok(best.0);
    }

    let Some((mut a, mut ga, mut b, _gb)) = bracket else {
        return Err(Error::NoConvergence {
            residual: best.1.abs(),
        });
    };
    while iter < MAX_SOLVER_ITER {
        let m = 0.5 * (a + b);
        iter += 1;
        let gm = g(m)?;
        if gm.abs() < best.1.abs() {
            best = (m, gm);
        }
        if gm.abs() <= FIXED_POINT_RESIDUAL {
            return Ok(m);
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
        if b - a <= f64::EPSILON * m.abs().max(1.0) {
            break;
        }
    }
    Err(Error::NoConvergence {
        residual: best.1.abs(),
    })
}

/// Central difference of the chart return map.
pub fn fd_derivative(
    sys: &HybridSystem,
    chart: &SectionChart,
    s: f64,
    h: f64,
    opts: &HybridOptions,
) -> Result<f64> {
    fd_derivative_iterated(sys, chart, s, 1, h, opts)
}

/// Central difference of `P^n` in chart coordinates.
pub fn fd_derivative_iterated(
    sys: &HybridSystem,
    chart: &SectionChart,
    s: f64,
    n: usize,
    h: f64,
    opts: &HybridOptions,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(
            "finite-difference step must be positive".into(),
        ));
    }
    let p_plus = return_map_chart(sys, chart, s + h, n, opts)?;
    let p_minus = return_map_chart(sys, chart, s - h, n, opts)?;
    Ok(chart.difference(p_minus, p_plus) / (2.0 * h))
}

/// Richardson extrapolation of the central difference over `h` and `h/2`.
pub fn fd_derivative_richardson(
    sys: &HybridSystem,
    chart: &SectionChart,
    s: f64,
    h: f64,
    opts: &HybridOptions,
) -> Result<f64> {
    let d1 = fd_derivative(sys, chart, s, h, opts)?;
    let d2 = fd_derivative(sys, chart, s, 0.5 * h, opts)?;
    Ok((4.0 * d2 - d1) / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

impl Verdict {
    pub fn classify(magnitude: f64, margin: f64) -> Self {
        if magnitude < 1.0 - margin {
            Verdict::Stable
        } else if magnitude > 1.0 + margin {
            Verdict::Unstable
        } else {
            Verdict::Marginal
        }
    }
}

/// Factors of one leg `x_i -> Delta(x_i) = y_i -> x_{i+1}` of a cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegFactors {
    pub s_in: f64,
    pub s_out: f64,
    pub reset_derivative: f64,
    pub speed_ratio: f64,
    pub sin_alpha: f64,
    pub sin_theta: f64,
    pub divergence_integral: f64,
    pub duration: f64,
}

/// Stability factor of a hybrid periodic orbit, decomposed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub fixed_point: f64,
    pub reset_derivative: f64,
    pub speed_ratio: f64,
    /// `sin(alpha) / sin(theta)` with signs retained.
    pub sine_ratio: f64,
    pub sin_alpha: f64,
    pub sin_theta: f64,
    pub divergence_integral: f64,
    pub divergence_factor: f64,
    pub product: f64,
    pub fd_check: Option<f64>,
    pub period: f64,
    pub impacts_per_period: usize,
    pub verdict: Verdict,
    pub legs: Vec<LegFactors>,
}

impl StabilityReport {
    fn from_legs(legs: Vec<LegFactors>, fd_check: Option<f64>, margin: f64) -> Self {
        let mut reset_derivative = 1.0;
        let mut speed_ratio = 1.0;
        let mut sin_alpha = 1.0;
        let mut sin_theta = 1.0;
        let mut divergence_integral = 0.0;
        let mut period = 0.0;
        for leg in &legs {
            reset_derivative *= leg.reset_derivative;
            speed_ratio *= leg.speed_ratio;
            sin_alpha *= leg.sin_alpha;
            sin_theta *= leg.sin_theta;
            divergence_integral += leg.divergence_integral;
            period += leg.duration;
        }
        let sine_ratio = sin_alpha / sin_theta;
        let divergence_factor = divergence_integral.exp();
        let product = reset_derivative * speed_ratio * sine_ratio * divergence_factor;
        Self {
            fixed_point: legs[0].s_in,
            reset_derivative,
            speed_ratio,
            sine_ratio,
            sin_alpha,
            sin_theta,
            divergence_integral,
            divergence_factor,
            product,
            fd_check,
            period,
            impacts_per_period: legs.len(),
            verdict: Verdict::classify(product.abs(), margin),
            legs,
        }
    }

    /// Relative disagreement between the formula and the finite difference.
    pub fn fd_relative_error(&self) -> Option<f64> {
        self.fd_check
            .map(|fd| (self.product.abs() - fd.abs()).abs() / fd.abs())
    }
}

/// Which cross-checks `derivative_planar` and `derivative_multi` run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeOptions {
    pub fd_step: Option<f64>,
    pub margin: f64,
}

impl Default for DerivativeOptions {
    fn default() -> Self {
        Self {
            fd_step: Some(RETURN_MAP_FD_STEP),
            margin: DEFAULT_MARGIN,
        }
    }
}

fn leg_factors(
    sys: &HybridSystem,
    chart: &SectionChart,
    s_in: f64,
    rm: &ReturnMapResult,
) -> Result<LegFactors> {
    let s_out = chart.coordinate(&rm.x_out);
    let chart_speed = norm(&chart.tangent(s_in));
    let reset_derivative = norm(&reset_tangent(sys, chart, s_in)) / chart_speed;

    let f_y = sys.field.eval(&rm.y);
    let f_x = sys.field.eval(&rm.x_out);
    let speed_ratio = norm(&f_y) / norm(&f_x);

    let alpha_frame = image_frame(sys, chart, s_in)?;
    let theta_frame = chart.frame(s_out)?;
    let sin_alpha = signed_sine(&f_y, &alpha_frame)?;
    let sin_theta = signed_sine(&f_x, &theta_frame)?;
    for sine in [sin_alpha, sin_theta] {
        if sine.abs() < DEGENERATE_SINE {
            return Err(Error::DegenerateAngle { sine });
        }
    }
    Ok(LegFactors {
        s_in,
        s_out,
        reset_derivative,
        speed_ratio,
        sin_alpha,
        sin_theta,
        divergence_integral: divergence_integral(&sys.field, &rm.excursion)?,
        duration: rm.tau,
    })
}

/// Stability factor of the period-one orbit through `chart(s_star)`.
pub fn derivative_planar(
    sys: &HybridSystem,
    chart: &SectionChart,
    s_star: f64,
    opts: &HybridOptions,
    dopts: &DerivativeOptions,
) -> Result<StabilityReport> {
    derivative_multi(sys, chart, &[s_star], opts, dopts)
}

/// Stability factor of the cycle `s_1 -> s_2 -> ... -> s_n -> s_1`.
pub fn derivative_multi(
    sys: &HybridSystem,
    chart: &SectionChart,
    cycle: &[f64],
    opts: &HybridOptions,
    dopts: &DerivativeOptions,
) -> Result<StabilityReport> {
    if sys.dimension() != 2 {
        return Err(Error::InvalidArgument(
            "the stability factor needs a planar system".into(),
        ));
    }
    if cycle.is_empty() {
        return Err(Error::InvalidArgument("empty cycle".into()));
    }
    let mut legs = Vec::with_capacity(cycle.len());
    for (i, &s) in cycle.iter().enumerate() {
        let next = cycle[(i + 1) % cycle.len()];
        let rm = return_map(sys, &chart.point(s), opts)?;
        let s_out = chart.coordinate(&rm.x_out);
        let residual = chart.difference(next, s_out).abs();
        if residual > NOT_FIXED_TOL {
            return Err(Error::NotFixedPoint { residual });
        }
        legs.push(leg_factors(sys, chart, s, &rm)?);
    }
    let fd = match dopts.fd_step {
        Some(h) => Some(fd_derivative_iterated(
            sys,
            chart,
            cycle[0],
            cycle.len(),
            h,
            opts,
        )?),
        None => None,
    };
    Ok(StabilityReport::from_legs(legs, fd, dopts.margin))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeterminantVerdict {
    NecessarilyUnstable,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterminantReport {
    pub value: f64,
    pub reset_volume: f64,
    pub speed_ratio: f64,
    pub sine_ratio: f64,
    pub divergence_factor: f64,
    pub period: f64,
    pub verdict: DeterminantVerdict,
}

/// Orthonormal basis of the orthogonal complement of `g`, as columns.
fn complement_basis(g: &[f64]) -> Result<DMatrix<f64>> {
    let n = g.len();
    let gn = norm(g);
    if !(gn > 0.0) {
        return Err(Error::DegenerateGuard { at: g.to_vec() });
    }
    let mut basis: Vec<DVector<f64>> = vec![DVector::from_iterator(n, g.iter().map(|v| v / gn))];
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        for b in &basis {
            let c = b.dot(&e);
            e -= b * c;
        }
        let en = e.norm();
        if en > 1e-8 {
            basis.push(e / en);
        }
        if basis.len() == n {
            break;
        }
    }
    if basis.len() != n {
        return Err(Error::InvalidArgument(
            "could not build a section chart".into(),
        ));
    }
    Ok(DMatrix::from_columns(&basis[1..]))
}

/// Volume test for an `n`-dimensional orbit through `x_star` on the impact
/// surface: a value above 1 rules out stability.
///
/// The reset Jacobian is restricted to an orthonormal tangent basis of the
/// surface at `x_star`; its volume factor is `sqrt(det(V^T V))`.
pub fn determinant_test(
    sys: &HybridSystem,
    x_star: &[f64],
    period: Option<f64>,
    opts: &HybridOptions,
) -> Result<DeterminantReport> {
    let n = sys.dimension();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "dimension must be at least 2".into(),
        ));
    }
    let rm = return_map(sys, x_star, opts)?;
    let residual = distance(&rm.x_out, x_star);
    if residual > NOT_FIXED_TOL {
        return Err(Error::NotFixedPoint { residual });
    }
    if let Some(t) = period {
        if (t - rm.tau).abs() > NOT_FIXED_TOL * t.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "supplied period {t} differs from the return time {}",
                rm.tau
            )));
        }
    }
    let g = sys.guard.gradient(x_star);
    let basis = complement_basis(&g)?;
    let mut cols = Vec::with_capacity(n - 1);
    for j in 0..n - 1 {
        let e: Vec<f64> = basis.column(j).iter().copied().collect();
        let v = match sys.reset.derivative_along(x_star, &e) {
            Some(v) => v,
            None => {
                let h = RESET_FD_STEP;
                let xp: Vec<f64> = x_star.iter().zip(&e).map(|(x, e)| x + h * e).collect();
                let xm: Vec<f64> = x_star.iter().zip(&e).map(|(x, e)| x - h * e).collect();
                let (a, b) = (sys.reset.apply(&xp), sys.reset.apply(&xm));
                a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            }
        };
        cols.push(DVector::from_vec(v));
    }
    let v = DMatrix::from_columns(&cols);
    let gram = v.transpose() * &v;
    let reset_volume = gram.determinant().max(0.0).sqrt();

    let f_y = DVector::from_vec(sys.field.eval(&rm.y));
    let f_x = sys.field.eval(x_star);
    let speed_ratio = f_y.norm() / norm(&f_x);
    // component of f(y) orthogonal to the image tangent space
    let sin_alpha = match gram.clone().try_inverse() {
        Some(inv) => {
            let proj = &v * (inv * (v.transpose() * &f_y));
            (&f_y - proj).norm() / f_y.norm()
        }
        None => return Err(Error::DegenerateAngle { sine: 0.0 }),
    };
    let gn = norm(&g);
    let sin_theta = f_x.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>().abs() / (gn * norm(&f_x));
    for sine in [sin_alpha, sin_theta] {
        if sine < DEGENERATE_SINE {
            return Err(Error::DegenerateAngle { sine });
        }
    }
    let sine_ratio = sin_alpha / sin_theta;
    let divergence_factor = divergence_integral(&sys.field, &rm.excursion)?.exp();
    let value = reset_volume * speed_ratio * sine_ratio * divergence_factor;
    Ok(DeterminantReport {
        value,
        reset_volume,
        speed_ratio,
        sine_ratio,
        divergence_factor,
        period: rm.tau,
        verdict: if value > 1.0 {
            DeterminantVerdict::NecessarilyUnstable
        } else {
            DeterminantVerdict::Inconclusive
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guard::{Direction, Guard};
    use crate::hybrid::Reset;
    use crate::ode::VectorField;

    /// x' = 1 - x on the line, sections at x = 1 + c..., written in the plane
    /// as (x, y) with y' = 1 and guard y = 1.
    fn linear_model(k: f64) -> HybridSystem {
        let field = VectorField::new(2, |x, dx| {
            dx[0] = -x[0];
            dx[1] = 1.0;
        })
        .with_divergence(|_| -1.0);
        let guard = Guard::new(|x| x[1] - 1.0, Direction::NegativeToPositive)
            .with_gradient(|_| vec![0.0, 1.0]);
        let reset = Reset::new(move |x| vec![k * x[0] + 1.0, 0.0]);
        HybridSystem::new("linear", field, guard, reset)
    }

    #[test]
    fn chart_round_trip() {
        let line = SectionChart::line(vec![1.0, 2.0], vec![0.0, 3.0]);
        for s in [-2.0, 0.0, 0.7] {
            assert!((line.coordinate(&line.point(s)) - s).abs() < 1e-12);
        }
        let circle = SectionChart::circle([0.5, -1.0], 2.0);
        for s in [-3.0, 0.0, 1.2, 3.1] {
            assert!((circle.coordinate(&circle.point(s)) - s).abs() < 1e-12);
        }
        assert!((circle.difference(3.1, -3.1) - (std::f64::consts::TAU - 6.2)).abs() < 1e-12);
    }

    #[test]
    fn time_to_impact_trivial() {
        let sys = linear_model(0.5);
        let (tau, x, _) = time_to_impact(&sys, &[0.3, 0.0], &HybridOptions::default()).unwrap();
        assert!((tau - 1.0).abs() < 1e-10);
        assert!((x[0] - 0.3 * (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn return_map_closed_form_and_fixed_point() {
        // P(s) = (k s + 1) / e
        let k = 0.5;
        let sys = linear_model(k);
        let chart = SectionChart::line(vec![0.0, 1.0], vec![1.0, 0.0]);
        let opts = HybridOptions::default().with_rel_tol(1e-11);
        let e = 1f64.exp();
        for s in [0.0, 0.4, 2.0] {
            let p = return_map_chart(&sys, &chart, s, 1, &opts).unwrap();
            assert!((p - (k * s + 1.0) / e).abs() < 1e-9);
        }
        let s_star = find_fixed_point(&sys, &chart, 3.0, &opts).unwrap();
        assert!((s_star - 1.0 / (e - k)).abs() < 1e-9);
        let rep =
            derivative_planar(&sys, &chart, s_star, &opts, &DerivativeOptions::default()).unwrap();
        assert!((rep.product - k / e).abs() < 1e-9);
        assert!((rep.fd_check.unwrap() - k / e).abs() < 1e-7);
        assert_eq!(rep.verdict, Verdict::Stable);
        assert_eq!(
            rep.product,
            rep.reset_derivative * rep.speed_ratio * rep.sine_ratio * rep.divergence_factor
        );
    }

    #[test]
    fn orientation_reversing_reset_gives_negative_factor() {
        let k = -0.5;
        let sys = linear_model(k);
        let chart = SectionChart::line(vec![0.0, 1.0], vec![1.0, 0.0]);
        let opts = HybridOptions::default().with_rel_tol(1e-11);
        let s_star = find_fixed_point(&sys, &chart, 0.0, &opts).unwrap();
        let rep =
            derivative_planar(&sys, &chart, s_star, &opts, &DerivativeOptions::default()).unwrap();
        let e = 1f64.exp();
        assert!((rep.product - k / e).abs() < 1e-9);
        assert!((rep.fd_check.unwrap() - k / e).abs() < 1e-7);
    }

    #[test]
    fn unstable_fixed_point_found_by_secant() {
        let k = 5.0;
        let sys = linear_model(k);
        let chart = SectionChart::line(vec![0.0, 1.0], vec![1.0, 0.0]);
        let opts = HybridOptions::default().with_rel_tol(1e-11);
        let s_star = find_fixed_point(&sys, &chart, 0.0, &opts).unwrap();
        let e = 1f64.exp();
        assert!((s_star - 1.0 / (e - k)).abs() < 1e-9);
    }

    #[test]
    fn not_on_section_and_not_fixed() {
        let sys = linear_model(0.5);
        let opts = HybridOptions::default();
        assert!(matches!(
            return_map(&sys, &[0.0, 0.5], &opts),
            Err(Error::NotOnSection { .. })
        ));
        let chart = SectionChart::line(vec![0.0, 1.0], vec![1.0, 0.0]);
        assert!(matches!(
            derivative_planar(&sys, &chart, 5.0, &opts, &DerivativeOptions::default()),
            Err(Error::NotFixedPoint { .. })
        ));
    }

    #[test]
    fn no_impact_within_horizon() {
        let sys = linear_model(0.5);
        let opts = HybridOptions {
            impact_horizon: 0.5,
            ..HybridOptions::default()
        };
        assert!(matches!(
            time_to_impact(&sys, &[0.0, 0.0], &opts),
            Err(Error::NoImpact { .. })
        ));
    }

    #[test]
    fn verdict_margins() {
        assert_eq!(Verdict::classify(0.5, 1e-6), Verdict::Stable);
        assert_eq!(Verdict::classify(1.0, 1e-6), Verdict::Marginal);
        assert_eq!(Verdict::classify(1.0 + 2e-6, 1e-6), Verdict::Unstable);
    }

    #[test]
    fn determinant_matches_planar_factor() {
        let k = 0.5;
        let sys = linear_model(k);
        let opts = HybridOptions::default().with_rel_tol(1e-11);
        let e = 1f64.exp();
        let x_star = vec![1.0 / (e - k), 1.0];
        let rep = determinant_test(&sys, &x_star, None, &opts).unwrap();
        assert!((rep.value - k / e).abs() < 1e-8);
        assert_eq!(rep.verdict, DeterminantVerdict::Inconclusive);
    }

    #[test]
    fn complement_basis_is_orthonormal() {
        let b = complement_basis(&[1.0, 2.0, -0.5]).unwrap();
        let g = DVector::from_vec(vec![1.0, 2.0, -0.5]);
        let gram = b.transpose() * &b;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert!((b.transpose() * g).norm() < 1e-12);
    }
}
