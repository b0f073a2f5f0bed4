//! Impact surface `S = {H = 0}`: crossing detection, root refinement and
//! section frames.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{default_fd_step, ContinuousSegment, ScalarFn, State, VectorField};

pub type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Sub-samples per integrator step when scanning for sign changes.
pub const SCAN_SUBDIVISIONS: usize = 8;
/// Iteration cap for crossing refinement.
pub const REFINE_MAX_ITER: usize = 200;

/// Which sign changes of `H` count as impacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    NegativeToPositive,
    PositiveToNegative,
    #[default]
    Either,
}

impl Direction {
    /// Does a crossing from `sign_before` to `sign_after` qualify?
    pub fn admits(self, sign_before: f64, sign_after: f64) -> bool {
        if sign_before * sign_after >= 0.0 {
            return false;
        }
        match self {
            Direction::NegativeToPositive => sign_before < 0.0,
            Direction::PositiveToNegative => sign_before > 0.0,
            Direction::Either => true,
        }
    }

    /// Does motion with `dH/dt = rate` through the surface qualify?
    pub fn admits_rate(self, rate: f64) -> bool {
        match self {
            Direction::NegativeToPositive => rate > 0.0,
            Direction::PositiveToNegative => rate < 0.0,
            Direction::Either => rate != 0.0,
        }
    }
}

/// The guard function `H` with optional analytic gradient.
#[derive(Clone)]
pub struct Guard {
    h: Arc<ScalarFn>,
    grad: Option<Arc<GradFn>>,
    direction: Direction,
}

impl fmt::Debug for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Guard")
            .field("direction", &self.direction)
            .field("analytic_gradient", &self.grad.is_some())
            .finish()
    }
}

impl Guard {
    pub fn new<F>(h: F, direction: Direction) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            h: Arc::new(h),
            grad: None,
            direction,
        }
    }

    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.h)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.grad {
            return g(x);
        }
        let h = default_fd_step(x);
        let mut xp = x.to_vec();
        (0..x.len())
            .map(|i| {
                xp[i] = x[i] + h;
                let hp = self.value(&xp);
                xp[i] = x[i] - h;
                let hm = self.value(&xp);
                xp[i] = x[i];
                (hp - hm) / (2.0 * h)
            })
            .collect()
    }
}

/// A time interval inside one segment over which `H` changes sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingBracket {
    pub t_lo: f64,
    pub t_hi: f64,
    pub sign_lo: f64,
    pub sign_hi: f64,
}

fn sign_of(v: f64) -> Option<f64> {
    if v > 0.0 {
        Some(1.0)
    } else if v < 0.0 {
        Some(-1.0)
    } else {
        None
    }
}

/// Incremental sign-change scanner over the steps of a segment.
///
/// Zeros of `H` on the sampling grid carry no sign; the last nonzero sign is
/// kept, so a touch-and-cross still brackets and a touch-and-return does not.
#[derive(Debug, Clone)]
pub(crate) struct CrossingScanner {
    direction: Direction,
    last: Option<(f64, f64)>,
}

impl CrossingScanner {
    /// `initial_sign` overrides the sign at the segment start; used when a
    /// leg starts on the surface and the sign of the side it heads to applies.
    pub(crate) fn new(direction: Direction, initial: Option<(f64, f64)>) -> Self {
        Self {
            direction,
            last: initial,
        }
    }
}

/// All sign changes of `H` along a segment that match the guard direction.
///
/// Each integrator step is sampled at `SCAN_SUBDIVISIONS` sub-intervals via
/// the interpolant. Grazing contacts without a sign change are not reported.
pub fn scan_crossings(guard: &Guard, seg: &ContinuousSegment) -> Vec<CrossingBracket> {
    let mut scanner = CrossingScanner::new(guard.direction(), None);
    if let Some(s) = sign_of(guard.value(seg.start_state())) {
        scanner.last = Some((seg.t_start(), s));
    }
    let mut out = Vec::new();
    for k in 0..seg.num_steps() {
        // a step may hold more than one crossing; rescan after each hit
        while let Some(b) = scanner.scan_step(guard, seg, k) {
            out.push(b);
        }
    }
    out
}

impl CrossingScanner {
    /// Next qualifying crossing in step `k` after the last sampled time.
    pub(crate) fn scan_step(
        &mut self,
        guard: &Guard,
        seg: &ContinuousSegment,
        k: usize,
    ) -> Option<CrossingBracket> {
        let (a, b) = seg.step_interval(k);
        let dt = (b - a) / SCAN_SUBDIVISIONS as f64;
        for j in 1..=SCAN_SUBDIVISIONS {
            let t = if j == SCAN_SUBDIVISIONS {
                b
            } else {
                a + dt * j as f64
            };
            if let Some((t_prev, _)) = self.last {
                if t <= t_prev {
                    continue;
                }
            }
            let x = seg.eval_in_step(k, t);
            let Some(s) = sign_of(guard.value(&x)) else {
                continue;
            };
            match self.last {
                Some((t_prev, s_prev)) if s != s_prev => {
                    self.last = Some((t, s));
                    if self.direction.admits(s_prev, s) {
                        return Some(CrossingBracket {
                            t_lo: t_prev,
                            t_hi: t,
                            sign_lo: s_prev,
                            sign_hi: s,
                        });
                    }
                }
                _ => self.last = Some((t, s)),
            }
        }
        None
    }
}

/// Brent's bracketed root finder on a scalar function.
///
/// Converges when the bracket is narrower than `x_tol` and `|f| <= f_tol`.
pub fn brent<F>(mut f: F, a: f64, b: f64, x_tol: f64, f_tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(Error::RefinementFailed {
            residual: fa.abs().min(fb.abs()),
        });
    }
    let (mut c, mut fc) = (b, fb);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if (fb > 0.0 && fc > 0.0) || (fb < 0.0 && fc < 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * x_tol;
        let xm = 0.5 * (c - b);
        if fb == 0.0 || (xm.abs() <= tol1 && fb.abs() <= f_tol) {
            return Ok(b);
        }
        if xm.abs() <= 2.0 * f64::EPSILON * b.abs().max(f64::MIN_POSITIVE) {
            // bracket at machine resolution and still |f| > f_tol
            return Err(Error::RefinementFailed { residual: fb.abs() });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
    }
    Err(Error::RefinementFailed { residual: fb.abs() })
}

/// Locate the crossing inside a bracket: Brent's method on `t -> H(x(t))`.
pub fn refine_crossing(
    guard: &Guard,
    seg: &ContinuousSegment,
    bracket: &CrossingBracket,
    t_tol: f64,
    h_tol: f64,
) -> Result<(f64, State)> {
    let eval = |t: f64| -> f64 {
        match seg.eval_at(t) {
            Ok(x) => guard.value(&x),
            Err(_) => f64::NAN,
        }
    };
    let t_star = brent(
        eval,
        bracket.t_lo,
        bracket.t_hi,
        t_tol,
        h_tol,
        REFINE_MAX_ITER,
    )?;
    let x_star = seg.eval_at(t_star)?;
    let residual = guard.value(&x_star).abs();
    if residual > h_tol {
        return Err(Error::RefinementFailed { residual });
    }
    Ok((t_star, x_star))
}

/// Orthonormal frame of a planar curve at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionFrame {
    pub point: State,
    pub tangent: [f64; 2],
    pub normal: [f64; 2],
}

impl SectionFrame {
    /// Frame with the given tangent direction; the normal is the tangent
    /// rotated by -pi/2, so the tangent is the normal rotated by +pi/2.
    pub fn from_tangent(point: &[f64], tangent: [f64; 2]) -> Result<Self> {
        let norm = tangent[0].hypot(tangent[1]);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateGuard { at: point.to_vec() });
        }
        let t = [tangent[0] / norm, tangent[1] / norm];
        Ok(Self {
            point: point.to_vec(),
            tangent: t,
            normal: [t[1], -t[0]],
        })
    }

    pub fn from_normal(point: &[f64], normal: [f64; 2]) -> Result<Self> {
        let norm = normal[0].hypot(normal[1]);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateGuard { at: point.to_vec() });
        }
        let n = [normal[0] / norm, normal[1] / norm];
        Ok(Self {
            point: point.to_vec(),
            tangent: [-n[1], n[0]],
            normal: n,
        })
    }

    /// The same frame with the tangent pointing along `dir` (normal follows).
    pub fn oriented_along(&self, dir: [f64; 2]) -> Self {
        if self.tangent[0] * dir[0] + self.tangent[1] * dir[1] < 0.0 {
            Self {
                point: self.point.clone(),
                tangent: [-self.tangent[0], -self.tangent[1]],
                normal: [-self.normal[0], -self.normal[1]],
            }
        } else {
            self.clone()
        }
    }
}

/// Frame of the impact surface at `x`: normal along `grad H`.
pub fn frame_at(guard: &Guard, x: &[f64]) -> Result<SectionFrame> {
    if x.len() != 2 {
        return Err(Error::InvalidArgument("section frames are planar".into()));
    }
    let g = guard.gradient(x);
    SectionFrame::from_normal(x, [g[0], g[1]])
}

/// Signed sine of the angle between the frame tangent and `v`.
///
/// Positive when `v` points to the normal side: `v = normal` gives `+1`.
pub fn signed_sine(v: &[f64], frame: &SectionFrame) -> Result<f64> {
    let norm = v[0].hypot(v[1]);
    if !(norm > 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok((v[0] * frame.normal[0] + v[1] * frame.normal[1]) / norm)
}

/// `<grad H(x), f(x)>`, the rate of change of `H` along the flow.
pub fn transversality(field: &VectorField, guard: &Guard, x: &[f64]) -> f64 {
    let g = guard.gradient(x);
    let f = field.eval(x);
    g.iter().zip(&f).map(|(a, b)| a * b).sum()
}
