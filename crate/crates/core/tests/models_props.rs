use hybrid_cycles::hybrid::{check_hypotheses, ChartSampling, CheckStatus, HybridOptions};
use hybrid_cycles::models::{
    annulus_model, energy_gain, energy_loss, existence_inequality, logistic_line_model,
    polar_model, rimless_model, vdp_model, Model, PolarParams, RimlessWheelParams, VdpHybridParams,
    VdpReset,
};
use hybrid_cycles::poincare::{find_fixed_point, return_map};
use proptest::prelude::*;

fn opts() -> HybridOptions {
    HybridOptions::default().with_rel_tol(1e-10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rimless_step_map_matches_energy_integral(frac in 1.02f64..5.0) {
        let p = RimlessWheelParams::default();
        let m = rimless_model(&p).unwrap();
        let v = -frac * p.min_post_impact_speed() / p.restitution();
        let oracle = p.step_map(v).unwrap();
        let rm = return_map(&m.system, &m.chart.point(v), &opts()).unwrap();
        prop_assert!((rm.x_out[1] - oracle).abs() <= 1e-8);
    }
}

#[test]
fn gait_is_an_energy_balance() {
    let p = RimlessWheelParams::default();
    let m = rimless_model(&p).unwrap();
    let v = find_fixed_point(&m.system, &m.chart, m.s_guess, &opts()).unwrap();
    assert!((energy_gain(&p) - energy_loss(&p, v)).abs() < 1e-6);
    assert!((v - p.gait_velocity()).abs() < 1e-8);
}

#[test]
fn existence_inequality_values() {
    let c = existence_inequality(&RimlessWheelParams::default()).unwrap();
    assert!(c.holds);
    assert!((c.lhs - 0.0646).abs() < 5e-5);
    assert!((c.rhs - 0.0115).abs() < 5e-5);
    assert!(existence_inequality(&RimlessWheelParams::new(0.1, 0.2, 9.8)).is_err());
}

fn check(m: &Model, range: (f64, f64)) -> hybrid_cycles::hybrid::HypothesisReport {
    check_hypotheses(
        &m.system,
        &ChartSampling {
            chart: m.chart.clone(),
            range,
            count: 400,
        },
        &opts(),
    )
}

#[test]
fn hypotheses_hold_on_the_working_models() {
    let cases = [
        (
            vdp_model(&VdpHybridParams::default()).unwrap(),
            (-1.5, -0.6),
        ),
        (
            vdp_model(&VdpHybridParams {
                mu: 1.0,
                reset: VdpReset::Linear {
                    m: 2.0,
                    a: None,
                    b: None,
                },
            })
            .unwrap(),
            (-1.3, -0.8),
        ),
        (polar_model(&PolarParams::default()).unwrap(), (0.3, 2.0)),
        (
            rimless_model(&RimlessWheelParams::default()).unwrap(),
            (-4.0, -0.5),
        ),
    ];
    for (m, range) in cases {
        let rep = check(&m, range);
        assert!(rep.all_pass(), "{}: {:?}", m.system.name, rep.checks);
    }
}

#[test]
fn counterexamples_fail_their_hypotheses() {
    let logistic = logistic_line_model();
    let rep = check(&logistic, (0.0, 1.0));
    assert_eq!(rep.get("C.2").unwrap().status, CheckStatus::Fail);

    let annulus = annulus_model();
    let period = annulus.chart.period().unwrap();
    let rep = check(&annulus, (0.0, period));
    assert_eq!(rep.get("C.4").unwrap().status, CheckStatus::Fail);
}
