//! Built-in hybrid systems and the rimless-wheel energy balance.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guard::{Direction, Guard};
use crate::hybrid::{impact_sequence, HybridOptions, HybridSystem, Reset, Termination};
use crate::ode::{State, VectorField};
use crate::poincare::{
    derivative_planar, find_fixed_point, DerivativeOptions, SectionChart, StabilityReport,
};

/// A system bundled with the chart of its impact surface and sensible defaults.
#[derive(Debug, Clone)]
pub struct Model {
    pub system: HybridSystem,
    pub chart: SectionChart,
    /// Default initial state for simulations.
    pub x0: State,
    /// Starting chart coordinate for fixed-point searches.
    pub s_guess: f64,
}

// ---------------------------------------------------------------- Van der Pol

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum VdpReset {
    /// `(x, y) -> (x, c y)`.
    Scale { c: f64 },
    /// `(1, y) -> (1, m (y - a) + b)`; `a`, `b` default to the impact values
    /// of the `c = -1.5` orbit.
    Linear {
        m: f64,
        #[serde(default)]
        a: Option<f64>,
        #[serde(default)]
        b: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VdpHybridParams {
    pub mu: f64,
    pub reset: VdpReset,
}

impl Default for VdpHybridParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            reset: VdpReset::Scale { c: -1.5 },
        }
    }
}

fn vdp_field(mu: f64) -> VectorField {
    VectorField::new(2, move |x, dx| {
        dx[0] = x[1];
        dx[1] = mu * (1.0 - x[0] * x[0]) * x[1] - x[0];
    })
    .with_divergence(move |x| mu * (1.0 - x[0] * x[0]))
    .with_jacobian(move |x| {
        nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[
                0.0,
                1.0,
                -2.0 * mu * x[0] * x[1] - 1.0,
                mu * (1.0 - x[0] * x[0]),
            ],
        )
    })
}

pub fn vdp_chart() -> SectionChart {
    SectionChart::line(vec![1.0, 0.0], vec![0.0, 1.0])
}

/// Van der Pol with the impact surface `x = 1`, hit from the right.
pub fn make_vdp_hybrid(p: &VdpHybridParams) -> Result<HybridSystem> {
    if !p.mu.is_finite() || p.mu < 0.0 {
        return Err(Error::InvalidArgument(
            "mu must be finite and non-negative".into(),
        ));
    }
    let guard =
        Guard::new(|x| x[0] - 1.0, Direction::PositiveToNegative).with_gradient(|_| vec![1.0, 0.0]);
    let (reset, name) = match p.reset {
        VdpReset::Scale { c } => (
            Reset::new(move |x| vec![x[0], c * x[1]])
                .with_derivative(move |_, v| vec![v[0], c * v[1]]),
            "vdp",
        ),
        VdpReset::Linear { m, a, b } => {
            let (a, b) = match (a, b) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    let (ra, rb) =
                        vdp_reference_impacts(p.mu, &HybridOptions::default().with_rel_tol(1e-12))?;
                    (a.unwrap_or(ra), b.unwrap_or(rb))
                }
            };
            (
                Reset::new(move |x| vec![x[0], m * (x[1] - a) + b])
                    .with_derivative(move |_, v| vec![v[0], m * v[1]]),
                "vdp-linear",
            )
        }
    };
    HybridSystem::new(name, vdp_field(p.mu), guard, reset).with_fixed_points(vec![vec![0.0, 0.0]])
}

/// Impact values `(y-, y+)` of the period-one orbit for the reset `y -> -1.5 y`.
pub fn vdp_reference_impacts(mu: f64, opts: &HybridOptions) -> Result<(f64, f64)> {
    let sys = make_vdp_hybrid(&VdpHybridParams {
        mu,
        reset: VdpReset::Scale { c: -1.5 },
    })?;
    let a = find_fixed_point(&sys, &vdp_chart(), -1.05, opts)?;
    Ok((a, -1.5 * a))
}

pub fn vdp_model(p: &VdpHybridParams) -> Result<Model> {
    Ok(Model {
        system: make_vdp_hybrid(p)?,
        chart: vdp_chart(),
        x0: vec![1.0, 3.0],
        s_guess: -1.05,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VdpContinuousParams {
    pub mu: f64,
}

impl Default for VdpContinuousParams {
    fn default() -> Self {
        Self { mu: 1.0 }
    }
}

/// Plain Van der Pol with the identity reset on the positive `x`-axis, a
/// section normal to the flow.
pub fn vdp_continuous_model(p: &VdpContinuousParams) -> Result<Model> {
    if !p.mu.is_finite() || p.mu < 0.0 {
        return Err(Error::InvalidArgument(
            "mu must be finite and non-negative".into(),
        ));
    }
    let guard =
        Guard::new(|x| x[1], Direction::PositiveToNegative).with_gradient(|_| vec![0.0, 1.0]);
    let sys = HybridSystem::new("vdp-continuous", vdp_field(p.mu), guard, Reset::identity())
        .with_domain(|x| x[0] > 0.0 || x[1] != 0.0)
        .with_fixed_points(vec![vec![0.0, 0.0]])?;
    Ok(Model {
        system: sys,
        chart: SectionChart::line(vec![0.0, 0.0], vec![1.0, 0.0]),
        x0: vec![2.0, 0.0],
        s_guess: 2.0,
    })
}

// ---------------------------------------------------------------- polar model

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolarParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for PolarParams {
    fn default() -> Self {
        Self {
            alpha: PI,
            beta: 2.0,
            gamma: 0.0,
        }
    }
}

impl PolarParams {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.gamma
            && self.gamma < self.alpha
            && self.alpha <= TAU
            && self.beta > 0.0
            && self.beta.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "polar parameters need 0 <= gamma < alpha <= 2 pi and beta > 0, got {self:?}"
            )))
        }
    }

    /// `beta e^(gamma - alpha)`, the return-map slope.
    pub fn contraction(&self) -> f64 {
        self.beta * (self.gamma - self.alpha).exp()
    }

    /// Closed-form fixed point of the radial return map, measured just after
    /// the reset on the ray `theta = gamma`.
    pub fn fixed_radius(&self) -> f64 {
        let e = (self.gamma - self.alpha).exp();
        self.beta * (e - 1.0) / (self.beta * e - 1.0)
    }

    /// Closed-form return map between consecutive post-reset radii.
    pub fn return_radius(&self, r: f64) -> f64 {
        self.beta * ((r - 1.0) * (self.gamma - self.alpha).exp() + 1.0)
    }

    /// Closed-form return map between consecutive pre-impact radii on the
    /// impact ray; conjugate to [`Self::return_radius`] through `r -> beta r`.
    pub fn impact_return_radius(&self, r: f64) -> f64 {
        (self.beta * r - 1.0) * (self.gamma - self.alpha).exp() + 1.0
    }
}

fn polar_field() -> VectorField {
    VectorField::new(2, |x, dx| {
        dx[0] = 1.0 - x[0];
        dx[1] = 1.0;
    })
    .with_divergence(|_| -1.0)
    .with_exact_flow(|x, t| vec![(x[0] - 1.0) * (-t).exp() + 1.0, x[1] + t])
}

/// `r' = 1 - r`, `theta' = 1` in the state coordinates `(r, theta)`, impact
/// ray `theta = alpha`, reset `(r, alpha) -> (beta r, gamma)`.
pub fn make_polar(p: &PolarParams) -> Result<HybridSystem> {
    p.validate()?;
    let PolarParams { alpha, beta, gamma } = *p;
    let guard = Guard::new(move |x| x[1] - alpha, Direction::NegativeToPositive)
        .with_gradient(|_| vec![0.0, 1.0]);
    let reset = Reset::new(move |x| vec![beta * x[0], gamma])
        .with_derivative(move |_, v| vec![beta * v[0], 0.0]);
    Ok(HybridSystem::new("polar", polar_field(), guard, reset).with_domain(|x| x[0] > 0.0))
}

pub fn polar_model(p: &PolarParams) -> Result<Model> {
    Ok(Model {
        system: make_polar(p)?,
        chart: SectionChart::line(vec![0.0, p.alpha], vec![1.0, 0.0]),
        x0: vec![1.0, p.gamma],
        s_guess: 1.0,
    })
}

/// The same dynamics in Cartesian coordinates; the impact surface is the
/// line through the origin at angle `alpha`, crossed counterclockwise.
pub fn make_polar_cartesian(p: &PolarParams) -> Result<HybridSystem> {
    p.validate()?;
    let PolarParams { alpha, beta, gamma } = *p;
    let field = VectorField::new(2, |x, dx| {
        let r = x[0].hypot(x[1]);
        let k = (1.0 - r) / r;
        dx[0] = k * x[0] - x[1];
        dx[1] = k * x[1] + x[0];
    })
    .with_divergence(|x| 1.0 / x[0].hypot(x[1]) - 2.0);
    let (ca, sa) = (alpha.cos(), alpha.sin());
    let guard = Guard::new(
        move |x| ca * x[1] - sa * x[0],
        Direction::NegativeToPositive,
    )
    .with_gradient(move |_| vec![-sa, ca]);
    let (cg, sg) = (gamma.cos(), gamma.sin());
    let reset = Reset::new(move |x| {
        let r = x[0].hypot(x[1]);
        vec![beta * r * cg, beta * r * sg]
    })
    .with_derivative(move |x, v| {
        let r = x[0].hypot(x[1]);
        let dr = (x[0] * v[0] + x[1] * v[1]) / r;
        vec![beta * dr * cg, beta * dr * sg]
    });
    Ok(HybridSystem::new("polar-cartesian", field, guard, reset)
        .with_domain(|x| x[0].hypot(x[1]) > 0.0))
}

pub fn polar_cartesian_model(p: &PolarParams) -> Result<Model> {
    Ok(Model {
        system: make_polar_cartesian(p)?,
        chart: SectionChart::line(vec![0.0, 0.0], vec![p.alpha.cos(), p.alpha.sin()]),
        x0: vec![p.gamma.cos(), p.gamma.sin()],
        s_guess: 1.0,
    })
}

/// The polar model with a decoupled contracting direction `z' = -z`.
pub fn make_polar_extruded(p: &PolarParams) -> Result<HybridSystem> {
    p.validate()?;
    let PolarParams { alpha, beta, gamma } = *p;
    let field = VectorField::new(3, |x, dx| {
        dx[0] = 1.0 - x[0];
        dx[1] = 1.0;
        dx[2] = -x[2];
    })
    .with_divergence(|_| -2.0);
    let guard = Guard::new(move |x| x[1] - alpha, Direction::NegativeToPositive)
        .with_gradient(|_| vec![0.0, 1.0, 0.0]);
    let reset = Reset::new(move |x| vec![beta * x[0], gamma, x[2]])
        .with_derivative(move |_, v| vec![beta * v[0], 0.0, v[2]]);
    Ok(HybridSystem::new("polar-extruded", field, guard, reset).with_domain(|x| x[0] > 0.0))
}

pub fn polar_extruded_model(p: &PolarParams) -> Result<Model> {
    Ok(Model {
        system: make_polar_extruded(p)?,
        chart: SectionChart::line(vec![0.0, p.alpha, 0.0], vec![1.0, 0.0, 0.0]),
        x0: vec![1.0, p.gamma, 0.5],
        s_guess: 1.0,
    })
}

// --------------------------------------------------------------- rimless wheel

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RimlessWheelParams {
    /// Half the angle between neighbouring legs.
    pub delta: f64,
    /// Slope angle.
    pub alpha: f64,
    /// `g / ell`.
    pub zeta: f64,
    pub ell: f64,
    /// Defaults to `zeta * ell`.
    pub g: Option<f64>,
    pub mass: f64,
}

impl Default for RimlessWheelParams {
    fn default() -> Self {
        Self {
            delta: PI / 10.0,
            alpha: PI / 30.0,
            zeta: 9.8,
            ell: 1.0,
            g: None,
            mass: 1.0,
        }
    }
}

impl RimlessWheelParams {
    pub fn new(delta: f64, alpha: f64, zeta: f64) -> Self {
        Self {
            delta,
            alpha,
            zeta,
            ..Self::default()
        }
    }

    pub fn gravity(&self) -> f64 {
        self.g.unwrap_or(self.zeta * self.ell)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.delta > 0.0
            && self.delta < FRAC_PI_4
            && self.alpha > 0.0
            && self.alpha < FRAC_PI_2
            && self.zeta > 0.0
            && self.zeta.is_finite()
            && self.ell > 0.0
            && self.mass > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "rimless wheel needs 0 < delta < pi/4, 0 < alpha < pi/2, zeta, ell, mass > 0; got {self:?}"
            )))
        }
    }

    /// Velocity retained through an impact.
    pub fn restitution(&self) -> f64 {
        (2.0 * self.delta).cos()
    }

    /// Smallest post-impact speed that carries the stance leg over the top.
    pub fn min_post_impact_speed(&self) -> f64 {
        (2.0 * self.zeta * (1.0 - (self.delta - self.alpha).cos())).sqrt()
    }

    /// Next pre-impact velocity from the energy integral, given the current
    /// one; `None` when the wheel falls back.
    pub fn step_map(&self, x2_minus: f64) -> Option<f64> {
        let c = self.restitution();
        let post = c * x2_minus;
        if post * post <= self.min_post_impact_speed().powi(2) || post >= 0.0 {
            return None;
        }
        let d = self.delta;
        let a = self.alpha;
        let sq = c * c * x2_minus * x2_minus + 2.0 * self.zeta * ((d - a).cos() - (d + a).cos());
        Some(-sq.sqrt())
    }

    /// Pre-impact velocity of the period-one gait from the energy balance.
    pub fn gait_velocity(&self) -> f64 {
        let c = self.restitution();
        let gain =
            2.0 * self.zeta * ((self.delta - self.alpha).cos() - (self.delta + self.alpha).cos());
        -(gain / (1.0 - c * c)).sqrt()
    }
}

/// Rimless wheel on a slope: `x1` is the stance-leg angle from vertical,
/// impacts at `x1 = -delta - alpha`.
pub fn make_rimless_wheel(p: &RimlessWheelParams) -> Result<HybridSystem> {
    p.validate()?;
    let zeta = p.zeta;
    let (d, a) = (p.delta, p.alpha);
    let c = p.restitution();
    let field = VectorField::new(2, move |x, dx| {
        dx[0] = x[1];
        dx[1] = zeta * x[0].sin();
    })
    .with_divergence(|_| 0.0);
    let guard = Guard::new(move |x| x[0] + d + a, Direction::PositiveToNegative)
        .with_gradient(|_| vec![1.0, 0.0]);
    let reset =
        Reset::new(move |x| vec![d - a, c * x[1]]).with_derivative(move |_, v| vec![0.0, c * v[1]]);
    HybridSystem::new("rimless-wheel", field, guard, reset)
        .with_domain(|x| x[0].abs() < FRAC_PI_2)
        .with_fixed_points(vec![vec![0.0, 0.0]])
}

pub fn rimless_chart(p: &RimlessWheelParams) -> SectionChart {
    SectionChart::line(vec![-p.delta - p.alpha, 0.0], vec![0.0, 1.0])
}

pub fn rimless_model(p: &RimlessWheelParams) -> Result<Model> {
    Ok(Model {
        system: make_rimless_wheel(p)?,
        chart: rimless_chart(p),
        x0: vec![p.delta - p.alpha, -1.2],
        s_guess: p.gait_velocity(),
    })
}

/// Energy injected per step by the slope, `2 ell g sin(delta) sin(alpha)`,
/// times the mass.
pub fn energy_gain(p: &RimlessWheelParams) -> f64 {
    p.mass * 2.0 * p.ell * p.gravity() * p.delta.sin() * p.alpha.sin()
}

/// Kinetic energy dissipated by an impact at angular velocity `x2_minus`.
pub fn energy_loss(p: &RimlessWheelParams, x2_minus: f64) -> f64 {
    let c = p.restitution();
    0.5 * p.mass * (p.ell * x2_minus).powi(2) * (1.0 - c * c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExistenceCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Sufficient condition for a period-one gait:
/// `2 sin(delta) sin(alpha) > (1 - cos^2 2delta)(1 - cos(delta - alpha)) / cos^2 2delta`.
pub fn existence_inequality(p: &RimlessWheelParams) -> Result<ExistenceCheck> {
    if !(p.delta > p.alpha && p.alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "the existence test needs delta > alpha > 0, got delta = {}, alpha = {}",
            p.delta, p.alpha
        )));
    }
    let lhs = 2.0 * p.delta.sin() * p.alpha.sin();
    let c2 = (2.0 * p.delta).cos().powi(2);
    let rhs = if c2 <= f64::EPSILON {
        f64::INFINITY
    } else {
        (1.0 - c2) * (1.0 - (p.delta - p.alpha).cos()) / c2
    };
    Ok(ExistenceCheck {
        lhs,
        rhs,
        holds: lhs > rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GaitClass {
    #[serde(rename = "stable period-1")]
    StablePeriod1,
    #[serde(rename = "unstable period-1")]
    UnstablePeriod1,
    #[serde(rename = "falls-back")]
    FallsBack,
    #[serde(rename = "undecided")]
    Undecided,
}

impl GaitClass {
    pub fn label(self) -> &'static str {
        match self {
            GaitClass::StablePeriod1 => "stable period-1",
            GaitClass::UnstablePeriod1 => "unstable period-1",
            GaitClass::FallsBack => "falls-back",
            GaitClass::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaitClassification {
    pub class: GaitClass,
    /// Pre-impact velocity of the gait, when one was located.
    pub velocity: Option<f64>,
    pub derivative: Option<f64>,
    pub impacts_simulated: usize,
    /// Smallest `|f|` over the simulated impacts' pre-impact states.
    pub min_speed: Option<f64>,
}

/// Number of impacts simulated before extrapolating to the gait.
const GAIT_WARMUP_IMPACTS: usize = 40;
const GAIT_MAX_ROUNDS: usize = 50;

/// Simulate from a generous initial speed and classify the long-run behaviour.
pub fn classify_gait(p: &RimlessWheelParams, opts: &HybridOptions) -> Result<GaitClassification> {
    let model = rimless_model(p)?;
    let sys = &model.system;
    let v_start =
        -(2.0 * p.gait_velocity().abs().max(p.min_post_impact_speed()) / p.restitution() + 1.0);
    let mut x = vec![p.delta - p.alpha, p.restitution() * v_start];
    let mut total = 0;
    let mut min_speed = f64::INFINITY;
    for _ in 0..GAIT_MAX_ROUNDS {
        let (events, term) = impact_sequence(sys, &x, GAIT_WARMUP_IMPACTS, opts)?;
        total += events.len();
        for e in &events {
            min_speed = min_speed.min(crate::hybrid::norm(&sys.field.eval(&e.x_minus)));
        }
        match term {
            Termination::ImpactBudget => {}
            Termination::LeftDomain => {
                return Ok(GaitClassification {
                    class: GaitClass::FallsBack,
                    velocity: None,
                    derivative: None,
                    impacts_simulated: total,
                    min_speed: finite(min_speed),
                })
            }
            _ => break,
        }
        let v: Vec<f64> = events.iter().map(|e| e.x_minus[1]).collect();
        let n = v.len();
        let guess = aitken(v[n - 3], v[n - 2], v[n - 1]).unwrap_or(v[n - 1]);
        if let Ok(s) = find_fixed_point(sys, &model.chart, guess, opts) {
            let dopts = DerivativeOptions {
                fd_step: None,
                ..DerivativeOptions::default()
            };
            let rep: StabilityReport = derivative_planar(sys, &model.chart, s, opts, &dopts)?;
            let class = if rep.product.abs() < 1.0 {
                GaitClass::StablePeriod1
            } else {
                GaitClass::UnstablePeriod1
            };
            return Ok(GaitClassification {
                class,
                velocity: Some(s),
                derivative: Some(rep.product),
                impacts_simulated: total,
                min_speed: finite(min_speed),
            });
        }
        x = events.last().unwrap().x_plus.clone();
    }
    Ok(GaitClassification {
        class: GaitClass::Undecided,
        velocity: None,
        derivative: None,
        impacts_simulated: total,
        min_speed: finite(min_speed),
    })
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Aitken's delta-squared extrapolation of a linearly converging sequence.
pub fn aitken(a: f64, b: f64, c: f64) -> Option<f64> {
    let denom = c - 2.0 * b + a;
    if denom.abs() < 1e-300 {
        return None;
    }
    let v = c - (c - b) * (c - b) / denom;
    v.is_finite().then_some(v)
}

// ------------------------------------------------------------ counterexamples

/// `x' = 1`, `y' = -y^2` on `[0, 1] x R` with the piecewise reset
/// `(1, y) -> (0, y)` for `y > 0` and `(0, y - 1)` otherwise. Its limit set
/// is not invariant.
pub fn make_noninvariance() -> HybridSystem {
    let field = VectorField::new(2, |x, dx| {
        dx[0] = 1.0;
        dx[1] = -x[1] * x[1];
    })
    .with_divergence(|x| -2.0 * x[1])
    .with_exact_flow(|x, t| vec![x[0] + t, x[1] / (1.0 + x[1] * t)]);
    let guard =
        Guard::new(|x| x[0] - 1.0, Direction::NegativeToPositive).with_gradient(|_| vec![1.0, 0.0]);
    let reset = Reset::new(|x| {
        if x[1] > 0.0 {
            vec![0.0, x[1]]
        } else {
            vec![0.0, x[1] - 1.0]
        }
    });
    HybridSystem::new("noninvariance", field, guard, reset)
        .with_domain(|x| x[0] >= -1e-12 && x[0] <= 1.0 + 1e-6)
}

pub fn noninvariance_model() -> Model {
    Model {
        system: make_noninvariance(),
        chart: SectionChart::line(vec![1.0, 0.0], vec![0.0, 1.0]),
        x0: vec![0.0, 1.0],
        s_guess: 0.5,
    }
}

/// `r' = theta' = 1` with impacts on the circle of radius 2 and the reset
/// halving the radius; orbits fill the annulus `1 <= r <= 2`.
pub fn make_annulus() -> HybridSystem {
    let field = VectorField::new(2, |x, dx| {
        let r = x[0].hypot(x[1]);
        dx[0] = x[0] / r - x[1];
        dx[1] = x[1] / r + x[0];
    })
    .with_divergence(|x| 1.0 / x[0].hypot(x[1]));
    let guard = Guard::new(
        |x| x[0] * x[0] + x[1] * x[1] - 4.0,
        Direction::NegativeToPositive,
    )
    .with_gradient(|x| vec![2.0 * x[0], 2.0 * x[1]]);
    let reset = Reset::new(|x| vec![0.5 * x[0], 0.5 * x[1]])
        .with_derivative(|_, v| vec![0.5 * v[0], 0.5 * v[1]]);
    HybridSystem::new("annulus", field, guard, reset).with_domain(|x| x[0].hypot(x[1]) > 0.0)
}

pub fn annulus_model() -> Model {
    Model {
        system: make_annulus(),
        chart: SectionChart::circle([0.0, 0.0], 2.0),
        x0: vec![1.5, 0.0],
        s_guess: 0.0,
    }
}

/// Translation `x' = 1`, `y' = 0` with impacts on `x = 2` and the reset
/// `(2, y) -> (y, 4 y (1 - y))`; the return map is the logistic map.
pub fn make_logistic_line() -> HybridSystem {
    let field = VectorField::new(2, |_, dx| {
        dx[0] = 1.0;
        dx[1] = 0.0;
    })
    .with_divergence(|_| 0.0)
    .with_exact_flow(|x, t| vec![x[0] + t, x[1]]);
    let guard =
        Guard::new(|x| x[0] - 2.0, Direction::NegativeToPositive).with_gradient(|_| vec![1.0, 0.0]);
    let reset = Reset::new(|x| vec![x[1], 4.0 * x[1] * (1.0 - x[1])])
        .with_derivative(|x, v| vec![v[1], 4.0 * (1.0 - 2.0 * x[1]) * v[1]]);
    HybridSystem::new("logistic-line", field, guard, reset)
}

pub fn logistic_line_model() -> Model {
    Model {
        system: make_logistic_line(),
        chart: SectionChart::line(vec![2.0, 0.0], vec![0.0, 1.0]),
        x0: vec![0.3, 0.3],
        s_guess: 0.3,
    }
}

// -------------------------------------------------------------------- registry

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoParams {}

/// A model name with its parameter object; `params` may be omitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "kebab-case")]
#[serde(try_from = "RawModelSpec")]
pub enum ModelSpec {
    Vdp(VdpHybridParams),
    VdpContinuous(VdpContinuousParams),
    Polar(PolarParams),
    PolarCartesian(PolarParams),
    PolarExtruded(PolarParams),
    RimlessWheel(RimlessWheelParams),
    Noninvariance(NoParams),
    Annulus(NoParams),
    LogisticLine(NoParams),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelSpec {
    name: String,
    #[serde(default = "empty_object")]
    params: serde_json::Value,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = String;

    fn try_from(raw: RawModelSpec) -> std::result::Result<Self, String> {
        fn parse<T: serde::de::DeserializeOwned>(
            name: &str,
            v: serde_json::Value,
        ) -> std::result::Result<T, String> {
            serde_json::from_value(v).map_err(|e| format!("model '{name}': {e}"))
        }
        let p = raw.params;
        let n = raw.name.as_str();
        Ok(match n {
            "vdp" => ModelSpec::Vdp(parse(n, p)?),
            "vdp-continuous" => ModelSpec::VdpContinuous(parse(n, p)?),
            "polar" => ModelSpec::Polar(parse(n, p)?),
            "polar-cartesian" => ModelSpec::PolarCartesian(parse(n, p)?),
            "polar-extruded" => ModelSpec::PolarExtruded(parse(n, p)?),
            "rimless-wheel" => ModelSpec::RimlessWheel(parse(n, p)?),
            "noninvariance" => ModelSpec::Noninvariance(parse(n, p)?),
            "annulus" => ModelSpec::Annulus(parse(n, p)?),
            "logistic-line" => ModelSpec::LogisticLine(parse(n, p)?),
            other => {
                return Err(format!(
                    "unknown model '{other}'; expected one of {}",
                    MODEL_NAMES.join(", ")
                ))
            }
        })
    }
}

/// Names accepted by [`ModelSpec`].
pub const MODEL_NAMES: &[&str] = &[
    "vdp",
    "vdp-continuous",
    "polar",
    "polar-cartesian",
    "polar-extruded",
    "rimless-wheel",
    "noninvariance",
    "annulus",
    "logistic-line",
];

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Vdp(_) => "vdp",
            ModelSpec::VdpContinuous(_) => "vdp-continuous",
            ModelSpec::Polar(_) => "polar",
            ModelSpec::PolarCartesian(_) => "polar-cartesian",
            ModelSpec::PolarExtruded(_) => "polar-extruded",
            ModelSpec::RimlessWheel(_) => "rimless-wheel",
            ModelSpec::Noninvariance(_) => "noninvariance",
            ModelSpec::Annulus(_) => "annulus",
            ModelSpec::LogisticLine(_) => "logistic-line",
        }
    }

    pub fn build(&self) -> Result<Model> {
        match self {
            ModelSpec::Vdp(p) => vdp_model(p),
            ModelSpec::VdpContinuous(p) => vdp_continuous_model(p),
            ModelSpec::Polar(p) => polar_model(p),
            ModelSpec::PolarCartesian(p) => polar_cartesian_model(p),
            ModelSpec::PolarExtruded(p) => polar_extruded_model(p),
            ModelSpec::RimlessWheel(p) => rimless_model(p),
            ModelSpec::Noninvariance(_) => Ok(noninvariance_model()),
            ModelSpec::Annulus(_) => Ok(annulus_model()),
            ModelSpec::LogisticLine(_) => Ok(logistic_line_model()),
        }
    }
}

/// Build a model from its name and a JSON parameter object.
pub fn build(name: &str, params: serde_json::Value) -> Result<Model> {
    if !MODEL_NAMES.contains(&name) {
        return Err(Error::UnknownModel(name.to_string()));
    }
    let spec: ModelSpec = serde_json::from_value(serde_json::json!({
        "name": name,
        "params": params,
    }))
    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    spec.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::hybrid_flow;
    use crate::poincare::return_map_chart;

    #[test]
    fn rimless_energy_numbers() {
        let p = RimlessWheelParams::default();
        assert!((energy_gain(&p) - 0.633_11).abs() < 1e-5);
        let flat = RimlessWheelParams { alpha: 0.0, ..p };
        assert_eq!(energy_gain(&flat), 0.0);
        let twice = RimlessWheelParams { g: Some(19.6), ..p };
        assert!((energy_gain(&twice) - 2.0 * energy_gain(&p)).abs() < 1e-12);

        assert_eq!(energy_loss(&p, 0.0), 0.0);
        let expected = 0.5 * (1.0 - (PI / 5.0).cos().powi(2));
        assert!((energy_loss(&p, 1.0) - expected).abs() < 1e-15);
        assert!((energy_loss(&p, 1.0) - 0.172_746).abs() < 1e-6);
        let tiny = RimlessWheelParams { delta: 1e-9, ..p };
        assert!(energy_loss(&tiny, 1.0) < 1e-15);

        let v = p.gait_velocity();
        assert!((energy_gain(&p) - energy_loss(&p, v)).abs() < 1e-12);
    }

    #[test]
    fn existence_inequality_values() {
        let e = existence_inequality(&RimlessWheelParams::default()).unwrap();
        assert!((e.lhs - 0.064_603).abs() < 1e-6);
        assert!((e.rhs - 0.011_535).abs() < 1e-6);
        assert!(e.holds);
        let flatish = RimlessWheelParams::new(PI / 10.0, 1e-6, 9.8);
        assert!(!existence_inequality(&flatish).unwrap().holds);
        let kink = RimlessWheelParams::new(FRAC_PI_4, 0.1, 9.8);
        let k = existence_inequality(&kink).unwrap();
        assert!(k.rhs.is_infinite() && !k.holds);
        assert!(existence_inequality(&RimlessWheelParams::new(0.1, 0.2, 9.8)).is_err());
    }

    #[test]
    fn polar_closed_forms() {
        let p = PolarParams::default();
        assert!((p.fixed_radius() - 2.0946).abs() < 1e-4);
        assert!((p.contraction() - 0.086_428).abs() < 1e-6);
        assert!((p.return_radius(p.fixed_radius()) - p.fixed_radius()).abs() < 1e-12);
        assert!(PolarParams { gamma: 4.0, ..p }.validate().is_err());
    }

    #[test]
    fn polar_variants_share_the_return_map() {
        let p = PolarParams {
            alpha: 2.0,
            beta: 1.5,
            gamma: 0.5,
        };
        let opts = HybridOptions::default().with_rel_tol(1e-11);
        for m in [polar_model(&p).unwrap(), polar_cartesian_model(&p).unwrap()] {
            for r in [0.5, 1.0, 3.0] {
                let pr = return_map_chart(&m.system, &m.chart, r, 1, &opts).unwrap();
                assert!(
                    (pr - p.impact_return_radius(r)).abs() < 1e-8,
                    "{}",
                    m.system.name
                );
            }
        }
    }

    #[test]
    fn rimless_step_map_matches_simulation() {
        let p = RimlessWheelParams::default();
        let m = rimless_model(&p).unwrap();
        let opts = HybridOptions::default().with_rel_tol(1e-12);
        for v in [-1.5, -2.0, -3.0] {
            let got = return_map_chart(&m.system, &m.chart, v, 1, &opts).unwrap();
            assert!((got - p.step_map(v).unwrap()).abs() < 1e-8);
        }
        // too slow: falls back before reaching the next impact
        assert!(p.step_map(-0.3).is_none());
        let slow = hybrid_flow(&m.system, &[p.delta - p.alpha, -0.2], 20.0, &opts).unwrap();
        assert_eq!(slow.termination, Termination::LeftDomain);
        assert!(slow.impacts.is_empty());
    }

    #[test]
    fn gait_classification() {
        let opts = HybridOptions::default().with_rel_tol(1e-10);
        let g = classify_gait(&RimlessWheelParams::default(), &opts).unwrap();
        assert_eq!(g.class, GaitClass::StablePeriod1);
        let v = g.velocity.unwrap();
        assert!((v - RimlessWheelParams::default().gait_velocity()).abs() < 1e-8);
        let d = g.derivative.unwrap();
        assert!((d.abs() - (PI / 5.0).cos().powi(2)).abs() < 1e-6);

        let steep = RimlessWheelParams::new(0.7, 0.05, 9.8);
        assert!(!existence_inequality(&steep).unwrap().holds);
        let g = classify_gait(&steep, &opts).unwrap();
        assert_eq!(g.class, GaitClass::FallsBack);
    }

    #[test]
    fn noninvariance_first_impact() {
        let m = noninvariance_model();
        let traj = hybrid_flow(&m.system, &m.x0, 1.5, &HybridOptions::default()).unwrap();
        let first = &traj.impacts[0];
        assert!((first.t - 1.0).abs() < 1e-10);
        assert!((first.x_minus[1] - 0.5).abs() < 1e-9);
        assert_eq!(first.x_plus, vec![0.0, first.x_minus[1]]);
    }

    #[test]
    fn logistic_line_return_map() {
        let m = logistic_line_model();
        let opts = HybridOptions::default();
        for y in [0.1, 0.3, 0.5, 0.77] {
            let p = return_map_chart(&m.system, &m.chart, y, 1, &opts).unwrap();
            assert!((p - 4.0 * y * (1.0 - y)).abs() < 1e-9);
        }
    }

    #[test]
    fn annulus_stays_inside() {
        let m = annulus_model();
        let traj = hybrid_flow(&m.system, &m.x0, 30.0, &HybridOptions::default()).unwrap();
        assert!(traj.impacts.len() > 10);
        for seg in &traj.segments {
            for (_, x) in seg.nodes() {
                let r = x[0].hypot(x[1]);
                assert!((1.0 - 1e-9..=2.0 + 1e-9).contains(&r));
            }
        }
    }

    #[test]
    fn registry_parses_names_and_rejects_unknown_keys() {
        let m = build(
            "polar",
            serde_json::json!({"alpha": 3.0, "beta": 0.5, "gamma": 1.0}),
        )
        .unwrap();
        assert_eq!(m.system.name, "polar");
        assert!(build("annulus", serde_json::json!({})).is_ok());
        assert!(matches!(
            build("nope", serde_json::json!({})),
            Err(Error::UnknownModel(_))
        ));
        assert!(build("polar", serde_json::json!({"alpha": 3.0, "bogus": 1})).is_err());
        let spec: ModelSpec = serde_json::from_str(r#"{"name":"rimless-wheel"}"#).unwrap();
        assert_eq!(spec.name(), "rimless-wheel");
        let spec: ModelSpec =
            serde_json::from_str(r#"{"name":"vdp","params":{"reset":{"linear":{"m":2.0}}}}"#)
                .unwrap();
        assert!(matches!(
            spec,
            ModelSpec::Vdp(VdpHybridParams {
                reset: VdpReset::Linear { .. },
                ..
            })
        ));
    }
}
