//! Numerical acceptance suite shared by the `verify` command and the
//! acceptance tests.

use std::f64::consts::{LN_2, PI, TAU};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Axis, SweepSpec, SweepTask};
use crate::error::{Error, Result};
use crate::hybrid::{distance, hybrid_flow, impact_sequence, HybridOptions, HybridSystem};
use crate::limits::{
    classify_interval_map, detect_cycle_finite, hybrid_1d_run, CycleKind, DiscreteMap,
    FiniteImpactSet, Hybrid1d, CYCLE_TOL,
};
use crate::models::{
    annulus_model, classify_gait, existence_inequality, noninvariance_model, polar_cartesian_model,
    polar_model, rimless_model, vdp_continuous_model, vdp_model, GaitClass, Model, PolarParams,
    RimlessWheelParams, VdpContinuousParams, VdpHybridParams, VdpReset,
};
use crate::ode::{divergence_integral, flow, VectorField};
use crate::poincare::{
    derivative_planar, find_fixed_point, find_periodic_point, return_map, DerivativeOptions,
};
use crate::sweep::{evaluate_cell, grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyContext {
    /// Integrator relative tolerance for every run in the suite.
    pub rel_tol: f64,
    /// Seed for the randomized samples.
    pub seed: u64,
}

impl Default for VerifyContext {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            seed: 20_240_601,
        }
    }
}

impl VerifyContext {
    fn opts(&self) -> HybridOptions {
        HybridOptions::default().with_rel_tol(self.rel_tol)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

#[derive(Clone, Copy)]
pub struct Criterion {
    pub id: usize,
    pub title: &'static str,
    check: fn(&VerifyContext) -> Result<(bool, String)>,
}

impl std::fmt::Debug for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Criterion({}, {:?})", self.id, self.title)
    }
}

impl Criterion {
    /// Run the check; errors count as failures.
    pub fn run(&self, ctx: &VerifyContext) -> Outcome {
        let start = Instant::now();
        let (passed, detail) = match (self.check)(ctx) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        Outcome {
            passed,
            detail,
            elapsed: start.elapsed(),
        }
    }
}

pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion {
            id: 1,
            title: "Van der Pol steady impacts",
            check: vdp_steady_impacts,
        },
        Criterion {
            id: 2,
            title: "Van der Pol stability factor",
            check: vdp_stability,
        },
        Criterion {
            id: 3,
            title: "linear-reset scaling of |P'|",
            check: linear_reset_scaling,
        },
        Criterion {
            id: 4,
            title: "instability onset in the linear-reset family",
            check: instability_onset,
        },
        Criterion {
            id: 5,
            title: "polar model against its closed form",
            check: polar_oracle,
        },
        Criterion {
            id: 6,
            title: "flow Jacobian determinant vs divergence integral",
            check: liouville,
        },
        Criterion {
            id: 7,
            title: "continuous Van der Pol return map",
            check: continuous_vdp,
        },
        Criterion {
            id: 8,
            title: "rimless wheel gait and existence sweep",
            check: rimless_wheel,
        },
        Criterion {
            id: 9,
            title: "one-dimensional cycles and finite-set detection",
            check: one_dimensional,
        },
        Criterion {
            id: 10,
            title: "event residual, cycle invariance, monotone maps",
            check: properties,
        },
    ]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ----------------------------------------------------------------------- 1

fn vdp_steady_impacts(ctx: &VerifyContext) -> Result<(bool, String)> {
    let start = Instant::now();
    let m = vdp_model(&VdpHybridParams::default())?;
    let (events, _) = impact_sequence(&m.system, &[1.0, 3.0], 120, &ctx.opts())?;
    let elapsed = start.elapsed();
    let last = events.last().ok_or(Error::NoImpact { horizon: 0.0 })?;
    let (ym, yp) = (last.x_minus[1], last.x_plus[1]);
    let ok = events.len() > 100
        && close(ym, -1.0498, 5e-3)
        && close(yp, 1.5747, 5e-3)
        && elapsed < Duration::from_secs(10);
    Ok((
        ok,
        format!(
            "y- = {ym:.6}, y+ = {yp:.6} after {} impacts in {:.3} s",
            events.len(),
            elapsed.as_secs_f64()
        ),
    ))
}

// ----------------------------------------------------------------------- 2

fn vdp_stability(ctx: &VerifyContext) -> Result<(bool, String)> {
    let m = vdp_model(&VdpHybridParams::default())?;
    let opts = ctx.opts();
    let s = find_fixed_point(&m.system, &m.chart, m.s_guess, &opts)?;
    let rep = derivative_planar(&m.system, &m.chart, s, &opts, &DerivativeOptions::default())?;
    let err = rep.fd_relative_error().unwrap_or(f64::INFINITY);
    let ok = close(rep.product.abs(), 0.3338, 5e-3) && err < 1e-4;
    Ok((
        ok,
        format!(
            "|P'| = {:.6}, FD = {:.6}, relative gap {err:.2e}",
            rep.product.abs(),
            rep.fd_check.unwrap_or(f64::NAN).abs()
        ),
    ))
}

// ----------------------------------------------------------------------- 3

fn linear_vdp(m: f64) -> Result<Model> {
    vdp_model(&VdpHybridParams {
        mu: 1.0,
        reset: VdpReset::Linear {
            m,
            a: None,
            b: None,
        },
    })
}

fn linear_reset_scaling(ctx: &VerifyContext) -> Result<(bool, String)> {
    let opts = ctx.opts();
    let dopts = DerivativeOptions {
        fd_step: None,
        ..DerivativeOptions::default()
    };
    let mut ok = true;
    let mut detail = String::new();
    for m in [1.0, 2.0, 3.0, 4.0] {
        let model = linear_vdp(m)?;
        let s = find_fixed_point(&model.system, &model.chart, model.s_guess, &opts)?;
        let rep = derivative_planar(&model.system, &model.chart, s, &opts, &dopts)?;
        let ratio = rep.product.abs() / (0.2225 * m);
        ok &= (ratio - 1.0).abs() < 0.02;
        let _ = write!(detail, "m={m}: {:.5} ", rep.product.abs());
    }
    Ok((ok, detail.trim_end().to_string()))
}

// ----------------------------------------------------------------------- 4

const ONSET_IMPACTS: usize = 1000;

fn steady_post_impact(m: f64, opts: &HybridOptions) -> Result<Vec<f64>> {
    let model = linear_vdp(m)?;
    let (events, _) = impact_sequence(&model.system, &[1.0, 3.0], ONSET_IMPACTS, opts)?;
    if events.len() < 4 {
        return Err(Error::NoImpact {
            horizon: opts.impact_horizon,
        });
    }
    Ok(events.iter().map(|e| e.x_plus[1]).collect())
}

fn instability_onset(ctx: &VerifyContext) -> Result<(bool, String)> {
    let opts = ctx.opts();
    let reference = 1.5747;
    let mut ok = true;
    let mut detail = String::new();

    for m in [-4.45, -4.4, 4.4, 4.45] {
        let y = steady_post_impact(m, &opts)?;
        let tail = &y[y.len() - 2..];
        let pass = tail.iter().all(|&v| close(v, reference, 1e-2));
        ok &= pass;
        let _ = write!(detail, "m={m}: {:.4} {} ", tail[1], mark(pass));
    }
    for (m, table) in [(-4.6, 1.6034), (-4.55, 1.5898), (-4.5, 1.5768)] {
        let y = steady_post_impact(m, &opts)?;
        let v = y[y.len() - 1];
        let deviates = (v - reference).abs() > 2e-2;
        let matches = close(v, table, 1.5e-2);
        ok &= deviates && matches;
        let _ = write!(
            detail,
            "m={m}: {v:.4} (deviation {:.4}) {} ",
            (v - reference).abs(),
            mark(deviates && matches)
        );
    }
    for (m, pair) in [
        (4.5, (1.5059, 1.6475)),
        (4.55, (1.3758, 1.8119)),
        (4.6, (1.3091, 1.9132)),
    ] {
        let y = steady_post_impact(m, &opts)?;
        let n = y.len();
        let (a, b) = (y[n - 2].min(y[n - 1]), y[n - 2].max(y[n - 1]));
        let two_cycle =
            close(y[n - 1], y[n - 3], 1e-4) && close(y[n - 2], y[n - 4], 1e-4) && (b - a) > 1e-3;
        let deviates = (a - reference).abs() > 2e-2 && (b - reference).abs() > 2e-2;
        let matches = close(a, pair.0, 1.5e-2) && close(b, pair.1, 1.5e-2);
        let pass = two_cycle && deviates && matches;
        ok &= pass;
        let _ = write!(detail, "m={m}: ({a:.4}, {b:.4}) {} ", mark(pass));
    }
    Ok((ok, detail.trim_end().to_string()))
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "MISS"
    }
}

// ----------------------------------------------------------------------- 5

fn polar_oracle(ctx: &VerifyContext) -> Result<(bool, String)> {
    let opts = ctx.opts();
    let mut rng = ctx.rng(5);
    let dopts = DerivativeOptions {
        fd_step: None,
        ..DerivativeOptions::default()
    };
    let (mut worst_s, mut worst_d, mut worst_f) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let alpha = rng.gen_range(0.5..TAU);
        let gamma = rng.gen_range(0.0..alpha - 0.25);
        let k = rng.gen_range(0.05..0.95);
        let beta = k * (alpha - gamma).exp();
        let p = PolarParams { alpha, beta, gamma };
        let m = polar_model(&p)?;
        let s = find_fixed_point(&m.system, &m.chart, m.s_guess, &opts)?;
        let closed = p.fixed_radius() / beta;
        let rep = derivative_planar(&m.system, &m.chart, s, &opts, &dopts)?;
        let e = (gamma - alpha).exp();
        worst_s = worst_s.max((s - closed).abs());
        worst_d = worst_d.max((rep.product - p.contraction()).abs());
        let factor_err = [
            (rep.reset_derivative - beta).abs() / beta,
            (rep.speed_ratio * rep.sine_ratio - 1.0).abs(),
            (rep.divergence_factor - e).abs() / e,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        worst_f = worst_f.max(factor_err);
    }
    let ok = worst_s <= 1e-8 && worst_d <= 1e-6 && worst_f <= 1e-6;
    Ok((
        ok,
        format!(
            "20 draws: fixed point err {worst_s:.1e}, derivative err {worst_d:.1e}, factor err {worst_f:.1e}"
        ),
    ))
}

// ----------------------------------------------------------------------- 6

fn liouville(ctx: &VerifyContext) -> Result<(bool, String)> {
    let m = polar_cartesian_model(&PolarParams::default())?;
    let field: &VectorField = &m.system.field;
    let iopts = ctx.opts().integrator;
    let x0 = [1.7, 0.4];
    let t = 2.5;
    let h = 1e-4;
    let seg = flow(field, &x0, t, &iopts)?;
    let mut jac = [[0.0; 2]; 2];
    for j in 0..2 {
        let mut xp = x0;
        let mut xm = x0;
        xp[j] += h;
        xm[j] -= h;
        let fp = flow(field, &xp, t, &iopts)?;
        let fm = flow(field, &xm, t, &iopts)?;
        for i in 0..2 {
            jac[i][j] = (fp.end_state()[i] - fm.end_state()[i]) / (2.0 * h);
        }
    }
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    let predicted = divergence_integral(field, &seg)?.exp();
    let err = (det - predicted).abs() / predicted.abs();
    Ok((
        err < 1e-4,
        format!("det DF = {det:.8e}, exp(int div) = {predicted:.8e}, relative error {err:.1e}"),
    ))
}

// ----------------------------------------------------------------------- 7

fn continuous_vdp(ctx: &VerifyContext) -> Result<(bool, String)> {
    let m = vdp_continuous_model(&VdpContinuousParams::default())?;
    let opts = ctx.opts();
    let s = find_fixed_point(&m.system, &m.chart, m.s_guess, &opts)?;
    let rep = derivative_planar(&m.system, &m.chart, s, &opts, &DerivativeOptions::default())?;
    let fd = rep.fd_check.unwrap_or(f64::NAN);
    let err = (rep.divergence_factor - fd).abs() / fd.abs();
    Ok((
        err < 1e-3,
        format!(
            "s* = {s:.6}, exp(int div) = {:.6e}, FD = {fd:.6e}, relative error {err:.1e}",
            rep.divergence_factor
        ),
    ))
}

// ----------------------------------------------------------------------- 8

/// The `(alpha, delta)` grid of the existence sweep: `alpha` in `(0, pi/8]`,
/// `delta` in `(alpha, pi/4)`.
pub fn rimless_sweep_spec(task: SweepTask) -> SweepSpec {
    SweepSpec {
        alpha: Axis {
            min: 0.0,
            max: PI / 8.0,
            count: 50,
            exclude_min: true,
            exclude_max: false,
        },
        delta: Axis {
            min: 0.0,
            max: PI / 4.0,
            count: 50,
            exclude_min: true,
            exclude_max: true,
        },
        delta_above_alpha: true,
        zeta: 9.8,
        task,
        workers: None,
    }
}

fn rimless_wheel(ctx: &VerifyContext) -> Result<(bool, String)> {
    let opts = ctx.opts();
    let p = RimlessWheelParams::default();
    let mut detail = String::new();

    let check = existence_inequality(&p)?;
    let ineq_ok = check.holds && close(check.lhs, 0.0646, 5e-5) && close(check.rhs, 0.0115, 5e-5);
    let _ = write!(detail, "lhs {:.5} rhs {:.5}; ", check.lhs, check.rhs);

    let gait = classify_gait(&p, &opts)?;
    let m = rimless_model(&p)?;
    let s = find_fixed_point(&m.system, &m.chart, m.s_guess, &opts)?;
    let rep = derivative_planar(&m.system, &m.chart, s, &opts, &DerivativeOptions::default())?;
    let fd = rep.fd_check.unwrap_or(f64::NAN);
    let gait_ok =
        gait.class == GaitClass::StablePeriod1 && rep.product.abs() < 1.0 && fd.abs() < 1.0;
    let _ = write!(
        detail,
        "gait {} at {s:.5}, |P'| {:.5}, FD {:.5}; ",
        gait.class.label(),
        rep.product.abs(),
        fd.abs()
    );

    let mut rng = ctx.rng(8);
    let v_min = p.min_post_impact_speed() / p.restitution();
    let mut step_err = 0.0f64;
    for _ in 0..20 {
        let v = -rng.gen_range(1.05 * v_min..6.0);
        let oracle = p.step_map(v).ok_or(Error::LeftDomain { t: 0.0 })?;
        let rm = return_map(&m.system, &m.chart.point(v), &opts)?;
        step_err = step_err.max((rm.x_out[1] - oracle).abs());
    }
    let step_ok = step_err <= 1e-8;
    let _ = write!(detail, "step map err {step_err:.1e}; ");

    let spec = rimless_sweep_spec(SweepTask::SimulateAndClassify);
    let cells = grid(&spec);
    let (mut agree, mut tolerated, mut in_band, mut bad) = (0, 0, 0, 0);
    for _ in 0..20 {
        let cell = cells[rng.gen_range(0..cells.len())];
        let row = evaluate_cell(cell, spec.zeta, spec.task, &opts);
        let holds = row.holds.unwrap_or(false);
        let stable = row.classification.as_deref() == Some(GaitClass::StablePeriod1.label());
        let band = match (row.lhs, row.rhs) {
            (Some(l), Some(r)) => (l - r).abs() < 0.002,
            _ => false,
        };
        if holds == stable {
            agree += 1;
        } else if holds {
            bad += 1;
        } else if band {
            in_band += 1;
        } else {
            tolerated += 1;
        }
    }
    let _ = write!(
        detail,
        "sweep: {agree} agree, {in_band} in band, {tolerated} tolerated, {bad} flag-true unstable"
    );
    Ok((ineq_ok && gait_ok && step_ok && bad == 0, detail))
}

// ----------------------------------------------------------------------- 9

/// Name, system, expected orbit and expected period time.
pub type Reference1d = (&'static str, Hybrid1d, Vec<f64>, f64);

/// The three reference one-dimensional systems with their expected cycles.
pub fn reference_1d_systems() -> Result<Vec<Reference1d>> {
    let unit = || VectorField::new(1, |_, dx| dx[0] = 1.0).with_divergence(|_| 0.0);
    let relax = VectorField::new(1, |x, dx| dx[0] = 2.0 - x[0]).with_divergence(|_| -1.0);
    Ok(vec![
        (
            "sawtooth",
            Hybrid1d::new(unit(), vec![(1.0, 1.0)], |_| 0.0, (0.0, 1.0))?,
            vec![1.0],
            1.0,
        ),
        (
            "two-point",
            Hybrid1d::new(
                unit(),
                vec![(1.0, 1.0), (2.0, 2.0)],
                |s| if s == 1.0 { 1.5 } else { 0.0 },
                (0.0, 2.0),
            )?,
            vec![1.0, 2.0],
            1.5,
        ),
        (
            "relaxation",
            Hybrid1d::new(relax, vec![(1.0, 1.0)], |_| 0.0, (0.0, 1.5))?
                .with_fixed_points(vec![2.0]),
            vec![1.0],
            LN_2,
        ),
    ])
}

/// Cycle reached from `start` under `f` on `{0, .., n-1}`, by walking until
/// a repeat: `(transient, cycle)`.
fn brute_force_cycle(f: &[usize], start: usize) -> (usize, Vec<usize>) {
    let mut seen = vec![None; f.len()];
    let mut path = Vec::new();
    let mut i = start;
    loop {
        if let Some(k) = seen[i] {
            return (k, path[k..].to_vec());
        }
        seen[i] = Some(path.len());
        path.push(i);
        i = f[i];
    }
}

fn one_dimensional(ctx: &VerifyContext) -> Result<(bool, String)> {
    let opts = ctx.opts();
    let mut ok = true;
    let mut detail = String::new();
    for (name, sys, orbit, period_time) in reference_1d_systems()? {
        let r = hybrid_1d_run(&sys, 0.0, &opts)?;
        let n_points = sys.entry_points().len();
        let pass = r.orbit == orbit
            && r.transient_length + r.orbit.len() <= n_points + 1
            && close(r.period_time.unwrap_or(f64::NAN), period_time, 1e-9);
        ok &= pass;
        let _ = write!(detail, "{name}: {:?} {} ", r.orbit, mark(pass));
    }

    let mut maps = 0usize;
    let mut mismatches = 0usize;
    for n in 1..=4usize {
        let set = FiniteImpactSet::new((0..n).map(|i| i as f64).collect())?;
        for code in 0..n.pow(n as u32) {
            let f: Vec<usize> = (0..n).map(|i| code / n.pow(i as u32) % n).collect();
            maps += 1;
            for start in 0..n {
                let (transient, cycle) = brute_force_cycle(&f, start);
                let r = detect_cycle_finite(&set, |s| Ok(f[s as usize] as f64), start as f64, n)?;
                let expected: Vec<f64> = cycle.iter().map(|&i| i as f64).collect();
                if r.orbit != expected || r.transient_length != transient || !r.is_cycle() {
                    mismatches += 1;
                }
            }
        }
    }
    ok &= mismatches == 0;
    let _ = write!(
        detail,
        "finite maps: {maps} checked, {mismatches} mismatches"
    );
    Ok((ok, detail))
}

// ---------------------------------------------------------------------- 10

fn residual_runs() -> Result<Vec<(&'static str, Model, usize)>> {
    Ok(vec![
        ("vdp", vdp_model(&VdpHybridParams::default())?, 200),
        ("vdp m=2", linear_vdp(2.0)?, 100),
        ("vdp m=4.5", linear_vdp(4.5)?, 200),
        ("vdp m=-4.6", linear_vdp(-4.6)?, 200),
        (
            "vdp-continuous",
            vdp_continuous_model(&VdpContinuousParams::default())?,
            50,
        ),
        ("polar", polar_model(&PolarParams::default())?, 50),
        (
            "polar-cartesian",
            polar_cartesian_model(&PolarParams::default())?,
            50,
        ),
        (
            "rimless",
            rimless_model(&RimlessWheelParams::default())?,
            50,
        ),
        ("annulus", annulus_model(), 100),
        ("noninvariance", noninvariance_model(), 20),
    ])
}

/// Sup distance between a mid-leg point of the period-`n` cycle and its
/// image one period later.
fn cycle_return_gap(m: &Model, n: usize, opts: &HybridOptions) -> Result<f64> {
    let sys: &HybridSystem = &m.system;
    let (events, _) = impact_sequence(sys, &m.x0, 300, opts)?;
    let guess = m.chart.coordinate(
        &events
            .last()
            .ok_or(Error::NoImpact { horizon: 0.0 })?
            .x_minus,
    );
    let s = find_periodic_point(sys, &m.chart, guess, n, opts)?;
    let first = return_map(sys, &m.chart.point(s), opts)?;
    let mut period = first.tau;
    let mut x = first.x_out.clone();
    for _ in 1..n {
        let rm = return_map(sys, &x, opts)?;
        period += rm.tau;
        x = rm.x_out;
    }
    let p = first.excursion.eval_at(0.5 * first.tau)?;
    let traj = hybrid_flow(sys, &p, period, opts)?;
    let end = traj
        .final_state()
        .ok_or(Error::NoImpact { horizon: period })?;
    Ok(distance(end, &p))
}

fn properties(ctx: &VerifyContext) -> Result<(bool, String)> {
    let opts = ctx.opts();
    let mut detail = String::new();

    let mut worst_residual = 0.0f64;
    let mut impacts = 0usize;
    for (_, m, n) in residual_runs()? {
        let (events, _) = impact_sequence(&m.system, &m.x0, n, &opts)?;
        impacts += events.len();
        for e in &events {
            worst_residual = worst_residual.max(m.system.guard.value(&e.x_minus).abs());
        }
    }
    let residual_ok = worst_residual <= 1e-9;
    let _ = write!(
        detail,
        "residual {worst_residual:.1e} over {impacts} impacts; "
    );

    let mut worst_gap = 0.0f64;
    for (m, n) in [
        (vdp_model(&VdpHybridParams::default())?, 1),
        (linear_vdp(4.5)?, 2),
        (vdp_continuous_model(&VdpContinuousParams::default())?, 1),
        (polar_model(&PolarParams::default())?, 1),
        (rimless_model(&RimlessWheelParams::default())?, 1),
    ] {
        worst_gap = worst_gap.max(cycle_return_gap(&m, n, &opts)?);
    }
    let invariance_ok = worst_gap <= 1e-6;
    let _ = write!(detail, "cycle return gap {worst_gap:.1e}; ");

    let mut rng = ctx.rng(10);
    let mut too_long = 0usize;
    let mut undecided = 0usize;
    for _ in 0..1000 {
        let mut knots: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if rng.gen_bool(0.5) {
            knots.reverse();
        }
        let map = DiscreteMap::new(move |x| piecewise_linear(&knots, x), 0.0, 1.0)?;
        let r = classify_interval_map(&map, rng.gen_range(0.0..1.0), 10_000, CYCLE_TOL);
        match r.kind {
            CycleKind::Periodic if r.period.unwrap_or(0) > 2 => too_long += 1,
            CycleKind::Undecided => undecided += 1,
            _ => {}
        }
    }
    let monotone_ok = too_long == 0;
    let _ = write!(
        detail,
        "monotone maps: {too_long} with period > 2, {undecided} undecided"
    );
    Ok((residual_ok && invariance_ok && monotone_ok, detail))
}

/// Linear interpolation through equally spaced knots on `[0, 1]`.
fn piecewise_linear(knots: &[f64], x: f64) -> f64 {
    let n = knots.len() - 1;
    let u = (x.clamp(0.0, 1.0) * n as f64).min(n as f64 - 1e-12);
    let i = u.floor() as usize;
    let w = u - i as f64;
    knots[i] * (1.0 - w) + knots[i + 1] * w
}
