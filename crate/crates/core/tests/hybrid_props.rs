use hybrid_cycles::guard::{frame_at, signed_sine};
use hybrid_cycles::hybrid::{hybrid_flow, impact_sequence, HybridOptions};
use hybrid_cycles::models::{
    make_polar_cartesian, make_rimless_wheel, make_vdp_hybrid, vdp_continuous_model, PolarParams,
    RimlessWheelParams, VdpHybridParams,
};
use proptest::prelude::*;

fn guards() -> Vec<hybrid_cycles::guard::Guard> {
    vec![
        make_vdp_hybrid(&VdpHybridParams::default()).unwrap().guard,
        vdp_continuous_model(&Default::default())
            .unwrap()
            .system
            .guard,
        make_polar_cartesian(&PolarParams {
            alpha: 2.0,
            beta: 1.5,
            gamma: 0.5,
        })
        .unwrap()
        .guard,
        make_rimless_wheel(&RimlessWheelParams::default())
            .unwrap()
            .guard,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn frames_are_orthonormal(x in prop::array::uniform2(-3.0f64..3.0)) {
        for g in guards() {
            let fr = frame_at(&g, &x).unwrap();
            let (t, n) = (fr.tangent, fr.normal);
            prop_assert!((t[0].hypot(t[1]) - 1.0).abs() < 1e-12);
            prop_assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-12);
            prop_assert!((t[0] * n[0] + t[1] * n[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_and_cosine_are_complementary(
        v in prop::array::uniform2(-5.0f64..5.0),
        x in prop::array::uniform2(-3.0f64..3.0),
    ) {
        prop_assume!(v[0].hypot(v[1]) > 1e-6);
        for g in guards() {
            let fr = frame_at(&g, &x).unwrap();
            let s = signed_sine(&v, &fr).unwrap();
            let c = (v[0] * fr.tangent[0] + v[1] * fr.tangent[1]) / v[0].hypot(v[1]);
            prop_assert!((s * s + c * c - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn impacts_lie_on_the_surface_and_reset_exactly(
        x in 1.05f64..2.5,
        y in -2.5f64..2.5,
        c in -2.0f64..-1.1,
    ) {
        let sys = make_vdp_hybrid(&VdpHybridParams {
            mu: 1.0,
            reset: hybrid_cycles::models::VdpReset::Scale { c },
        })
        .unwrap();
        let opts = HybridOptions::default().with_rel_tol(1e-10);
        let (events, _) = impact_sequence(&sys, &[x, y], 30, &opts).unwrap();
        prop_assert!(!events.is_empty());
        for e in &events {
            prop_assert!(sys.guard.value(&e.x_minus).abs() <= 1e-9);
            prop_assert_eq!(&e.x_plus, &sys.reset.apply(&e.x_minus));
        }
    }

    #[test]
    fn runs_are_deterministic(x in 1.05f64..2.5, y in -2.5f64..2.5) {
        let sys = make_vdp_hybrid(&VdpHybridParams::default()).unwrap();
        let opts = HybridOptions::default();
        let a = hybrid_flow(&sys, &[x, y], 15.0, &opts).unwrap();
        let b = hybrid_flow(&sys, &[x, y], 15.0, &opts).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        prop_assert_eq!(ca, cb);
        prop_assert_eq!(a.impacts, b.impacts);
    }

    #[test]
    fn concatenation_is_consistent(
        x in 1.05f64..2.5,
        y in -2.5f64..2.5,
        t1 in 0.5f64..6.0,
        t2 in 0.5f64..6.0,
    ) {
        let sys = make_vdp_hybrid(&VdpHybridParams::default()).unwrap();
        let opts = HybridOptions::default().with_rel_tol(1e-10);
        let whole = hybrid_flow(&sys, &[x, y], t1 + t2, &opts).unwrap();
        prop_assume!(whole.impacts.iter().all(|e| (e.t - t1).abs() > 1e-6));
        let head = hybrid_flow(&sys, &[x, y], t1, &opts).unwrap();
        let mid = head.final_state().unwrap().to_vec();
        let tail = hybrid_flow(&sys, &mid, t2, &opts).unwrap();
        let (a, b) = (whole.final_state().unwrap(), tail.final_state().unwrap());
        for (u, v) in a.iter().zip(b) {
            let tol = 10.0 * (1e-10 * u.abs().max(1.0) + 1e-12);
            prop_assert!((u - v).abs() <= tol, "{u} vs {v} (tol {tol:e})");
        }
    }
}
