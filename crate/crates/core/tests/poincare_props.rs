use hybrid_cycles::hybrid::HybridOptions;
use hybrid_cycles::models::{
    polar_cartesian_model, polar_extruded_model, polar_model, rimless_model, vdp_model, Model,
    PolarParams, RimlessWheelParams, VdpHybridParams, VdpReset,
};
use hybrid_cycles::poincare::{
    derivative_planar, determinant_test, find_fixed_point, return_map_chart, DerivativeOptions,
    DeterminantVerdict, Verdict,
};
use hybrid_cycles::Error;
use proptest::prelude::*;

fn opts() -> HybridOptions {
    HybridOptions::default().with_rel_tol(1e-10)
}

fn stable_models() -> Vec<Model> {
    let mut v = vec![
        vdp_model(&VdpHybridParams::default()).unwrap(),
        polar_model(&PolarParams::default()).unwrap(),
        polar_cartesian_model(&PolarParams::default()).unwrap(),
        rimless_model(&RimlessWheelParams::default()).unwrap(),
    ];
    for m in [1.0, 2.0, 3.0, 4.0] {
        v.push(
            vdp_model(&VdpHybridParams {
                mu: 1.0,
                reset: VdpReset::Linear {
                    m,
                    a: None,
                    b: None,
                },
            })
            .unwrap(),
        );
    }
    v
}

#[test]
fn formula_matches_finite_differences_on_stable_cycles() {
    for m in stable_models() {
        let s = find_fixed_point(&m.system, &m.chart, m.s_guess, &opts()).unwrap();
        let residual = (return_map_chart(&m.system, &m.chart, s, 1, &opts()).unwrap() - s).abs();
        assert!(
            residual <= 1e-10,
            "{}: residual {residual:e}",
            m.system.name
        );
        let rep = derivative_planar(
            &m.system,
            &m.chart,
            s,
            &opts(),
            &DerivativeOptions::default(),
        )
        .unwrap();
        let err = rep.fd_relative_error().unwrap();
        assert!(err < 1e-4, "{}: {err:e}", m.system.name);
        assert_eq!(rep.verdict, Verdict::Stable);
        assert_eq!(
            rep.product,
            rep.reset_derivative * rep.speed_ratio * rep.sine_ratio * rep.divergence_factor
        );
    }
}

#[test]
fn vdp_factors() {
    let m = vdp_model(&VdpHybridParams::default()).unwrap();
    let s = find_fixed_point(&m.system, &m.chart, m.s_guess, &opts()).unwrap();
    let rep = derivative_planar(
        &m.system,
        &m.chart,
        s,
        &opts(),
        &DerivativeOptions::default(),
    )
    .unwrap();
    assert!((rep.product.abs() - 0.3338).abs() < 5e-3);
    assert_eq!(rep.reset_derivative, 1.5);
    assert!((rep.period - 1.8604).abs() < 1e-3);
    assert_eq!(rep.impacts_per_period, 1);
}

#[test]
fn polar_stability_value() {
    let m = polar_model(&PolarParams::default()).unwrap();
    let s = find_fixed_point(&m.system, &m.chart, m.s_guess, &opts()).unwrap();
    let rep = derivative_planar(
        &m.system,
        &m.chart,
        s,
        &opts(),
        &DerivativeOptions::default(),
    )
    .unwrap();
    assert!((rep.product - 0.086428).abs() < 1e-6);
}

#[test]
fn not_a_fixed_point_is_rejected() {
    let m = vdp_model(&VdpHybridParams::default()).unwrap();
    let r = derivative_planar(
        &m.system,
        &m.chart,
        -1.3,
        &opts(),
        &DerivativeOptions::default(),
    );
    assert!(matches!(r, Err(Error::NotFixedPoint { .. })));
}

#[test]
fn volume_test_verdicts() {
    let stable = PolarParams::default();
    let m = polar_extruded_model(&stable).unwrap();
    let s = find_fixed_point(&m.system, &m.chart, m.s_guess, &opts()).unwrap();
    let rep = determinant_test(&m.system, &m.chart.point(s), None, &opts()).unwrap();
    assert_eq!(rep.verdict, DeterminantVerdict::Inconclusive);

    let m = vdp_model(&VdpHybridParams {
        mu: 1.0,
        reset: VdpReset::Linear {
            m: 5.0,
            a: None,
            b: None,
        },
    })
    .unwrap();
    let s = find_fixed_point(&m.system, &m.chart, m.s_guess, &opts()).unwrap();
    let rep = determinant_test(&m.system, &m.chart.point(s), None, &opts()).unwrap();
    assert_eq!(rep.verdict, DeterminantVerdict::NecessarilyUnstable);
    let planar = derivative_planar(
        &m.system,
        &m.chart,
        s,
        &opts(),
        &DerivativeOptions::default(),
    )
    .unwrap();
    assert!((rep.value - planar.product.abs()).abs() < 1e-9);
    assert_eq!(planar.verdict, Verdict::Unstable);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn polar_matches_closed_form(
        alpha in 0.5f64..std::f64::consts::TAU,
        gamma_frac in 0.0f64..0.9,
        k in 0.05f64..0.95,
    ) {
        let gamma = gamma_frac * alpha;
        let beta = k * (alpha - gamma).exp();
        let p = PolarParams { alpha, beta, gamma };
        let m = polar_model(&p).unwrap();
        let s = find_fixed_point(&m.system, &m.chart, m.s_guess, &opts()).unwrap();
        prop_assert!((s - p.fixed_radius() / beta).abs() <= 1e-8);
        let rep = derivative_planar(&m.system, &m.chart, s, &opts(), &DerivativeOptions::default())
            .unwrap();
        prop_assert!((rep.product - k).abs() <= 1e-6);
        prop_assert!((rep.reset_derivative - beta).abs() <= 1e-6 * beta);
        prop_assert!((rep.speed_ratio * rep.sine_ratio - 1.0).abs() <= 1e-6);
        prop_assert!((rep.divergence_factor - (gamma - alpha).exp()).abs() <= 1e-6);
        prop_assert!(rep.fd_relative_error().unwrap() < 1e-4);
    }
}
