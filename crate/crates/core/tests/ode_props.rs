use hybrid_cycles::models::{make_polar_cartesian, PolarParams};
use hybrid_cycles::ode::{divergence_integral, flow, IntegratorOptions, VectorField};
use proptest::prelude::*;

fn smooth_field(c: [f64; 6]) -> VectorField {
    VectorField::new(2, move |x, dx| {
        dx[0] = c[0] * x[0] + c[1] * x[1] + c[4] * x[1].sin();
        dx[1] = c[2] * x[0] + c[3] * x[1] + c[5] * x[0].cos();
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_is_a_semigroup(
        c in prop::array::uniform6(-1.0f64..1.0),
        x0 in prop::array::uniform2(-1.0f64..1.0),
        t1 in 0.1f64..2.0,
        t2 in 0.1f64..2.0,
    ) {
        let f = smooth_field(c);
        let opts = IntegratorOptions::default().with_rel_tol(1e-10);
        let whole = flow(&f, &x0, t1 + t2, &opts).unwrap();
        let first = flow(&f, &x0, t1, &opts).unwrap();
        let second = flow(&f, first.end_state(), t2, &opts).unwrap();
        for (a, b) in whole.end_state().iter().zip(second.end_state()) {
            let tol = 10.0 * (opts.rel_tol * a.abs().max(1.0) + opts.abs_tol);
            prop_assert!((a - b).abs() <= tol, "{a} vs {b}");
        }
    }

    #[test]
    fn jacobian_determinant_matches_divergence(
        r in 0.3f64..2.5,
        theta in 0.0f64..std::f64::consts::TAU,
        t in 0.2f64..4.0,
    ) {
        let sys = make_polar_cartesian(&PolarParams::default()).unwrap();
        let f = &sys.field;
        let opts = IntegratorOptions::default().with_rel_tol(1e-11);
        let x0 = [r * theta.cos(), r * theta.sin()];
        let h = 1e-5;
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let (mut xp, mut xm) = (x0, x0);
            xp[j] += h;
            xm[j] -= h;
            let a = flow(f, &xp, t, &opts).unwrap();
            let b = flow(f, &xm, t, &opts).unwrap();
            for i in 0..2 {
                jac[i][j] = (a.end_state()[i] - b.end_state()[i]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let seg = flow(f, &x0, t, &opts).unwrap();
        let expected = divergence_integral(f, &seg).unwrap().exp();
        prop_assert!((det - expected).abs() / expected < 1e-4);
    }
}

#[test]
fn halving_tolerance_never_increases_error() {
    let sys = make_polar_cartesian(&PolarParams::default()).unwrap();
    let (r0, th0, t) = (0.4f64, 0.3f64, 3.0f64);
    let r = 1.0 + (r0 - 1.0) * (-t).exp();
    let exact = [r * (th0 + t).cos(), r * (th0 + t).sin()];
    let mut errors = Vec::new();
    let mut tol = 1e-6;
    for _ in 0..5 {
        let opts = IntegratorOptions::default().with_rel_tol(tol);
        let seg = flow(&sys.field, &[r0 * th0.cos(), r0 * th0.sin()], t, &opts).unwrap();
        let e = seg.end_state();
        errors.push((e[0] - exact[0]).hypot(e[1] - exact[1]));
        tol /= 2.0;
    }
    for w in errors.windows(2) {
        assert!(w[1] <= w[0], "{errors:?}");
    }
}
