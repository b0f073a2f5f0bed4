use std::ffi::{c_char, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use hybrid_cycles_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { hc_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn model(name: &str, params: Option<&str>) -> Result<*mut HcModel, HcStatus> {
    let name = CString::new(name).unwrap();
    let params = params.map(|p| CString::new(p).unwrap());
    let mut out = ptr::null_mut();
    let st = unsafe {
        hc_model_new(
            name.as_ptr(),
            params.as_ref().map_or(ptr::null(), |p| p.as_ptr()),
            &mut out,
        )
    };
    if st == HcStatus::Ok {
        Ok(out)
    } else {
        assert!(out.is_null());
        Err(st)
    }
}

#[test]
fn unknown_model_and_bad_params() {
    assert_eq!(model("pendulum", None).unwrap_err(), HcStatus::UnknownModel);
    assert!(last_error().contains("pendulum"));
    assert_eq!(
        model("vdp", Some("{\"mu\": ")).unwrap_err(),
        HcStatus::InvalidArgument
    );
    assert_eq!(
        model("polar", Some(r#"{"alpha":3.0,"beta":-1,"gamma":0}"#)).unwrap_err(),
        HcStatus::InvalidArgument
    );
    let st = unsafe { hc_model_new(ptr::null(), ptr::null(), ptr::null_mut()) };
    assert_eq!(st, HcStatus::NullPointer);
}

#[test]
fn simulate_vdp() {
    let m = model("vdp", None).unwrap();
    unsafe {
        assert_eq!(hc_model_dimension(m), 2);
        let mut x0 = [0.0; 2];
        assert_eq!(hc_model_initial_state(m, x0.as_mut_ptr(), 2), HcStatus::Ok);
        let mut opts = hc_options_default();
        opts.rel_tol = 1e-10;
        opts.abs_tol = 1e-12;
        let mut traj = ptr::null_mut();
        let st = hc_simulate(m, x0.as_ptr(), 2, 60.0, &opts, &mut traj);
        assert_eq!(st, HcStatus::Ok);
        let n = hc_trajectory_impact_count(traj);
        assert!(n > 20);
        let (mut t, mut xm, mut xp) = (0.0, [0.0; 2], [0.0; 2]);
        let st = hc_trajectory_impact(traj, n - 1, &mut t, xm.as_mut_ptr(), xp.as_mut_ptr(), 2);
        assert_eq!(st, HcStatus::Ok);
        assert!((xm[0] - 1.0).abs() < 1e-9);
        assert!((xm[1] + 1.0498).abs() < 5e-3);
        assert!((xp[1] - 1.5747).abs() < 5e-3);
        assert_eq!(xp[1], -1.5 * xm[1]);

        let mut at = [0.0; 2];
        assert_eq!(
            hc_trajectory_state_at(traj, t, at.as_mut_ptr(), 2),
            HcStatus::Ok
        );
        assert_eq!(at, xp);
        let mut small = [0.0; 1];
        assert_eq!(
            hc_trajectory_final_state(traj, small.as_mut_ptr(), 1),
            HcStatus::BufferTooSmall
        );
        assert_eq!(
            hc_trajectory_impact(
                traj,
                n,
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
                0
            ),
            HcStatus::InvalidArgument
        );
        let mut term = HcTermination::BlowUp;
        assert_eq!(hc_trajectory_termination(traj, &mut term), HcStatus::Ok);
        assert_eq!(term, HcTermination::TimeElapsed);
        assert_eq!(hc_trajectory_duration(traj), 60.0);
        hc_trajectory_free(traj);

        let mut traj = ptr::null_mut();
        let st = hc_simulate(m, x0.as_ptr(), 3, 1.0, ptr::null(), &mut traj);
        assert_eq!(st, HcStatus::InvalidArgument);
        assert!(traj.is_null());
        hc_model_free(m);
    }
}

#[test]
fn stability_reports() {
    let m = model("vdp", None).unwrap();
    let mut s = std::mem::MaybeUninit::<HcStability>::uninit();
    unsafe {
        let st = hc_stability(m, f64::NAN, 1, ptr::null(), s.as_mut_ptr());
        assert_eq!(st, HcStatus::Ok, "{}", last_error());
        let s = s.assume_init();
        assert!((s.product.abs() - 0.3338).abs() < 5e-3);
        assert_eq!(s.verdict, HcVerdict::Stable);
        assert!((s.fd_check.abs() - s.product.abs()).abs() / s.product.abs() < 1e-4);
        assert_eq!(
            hc_stability(m, f64::NAN, 0, ptr::null(), &mut { s }),
            HcStatus::InvalidArgument
        );
        hc_model_free(m);
    }

    let m = model(
        "polar",
        Some(r#"{"alpha":3.141592653589793,"beta":2,"gamma":0}"#),
    )
    .unwrap();
    let mut opts = hc_options_default();
    opts.rel_tol = 1e-10;
    opts.abs_tol = 1e-12;
    let mut s = std::mem::MaybeUninit::<HcStability>::uninit();
    unsafe {
        assert_eq!(
            hc_stability(m, f64::NAN, 1, &opts, s.as_mut_ptr()),
            HcStatus::Ok
        );
        assert!((s.assume_init().product - 0.086428).abs() < 1e-6);
        hc_model_free(m);
    }

    let m = model("polar-extruded", None).unwrap();
    let mut s = std::mem::MaybeUninit::<HcStability>::uninit();
    unsafe {
        assert_eq!(hc_model_dimension(m), 3);
        assert_eq!(
            hc_stability(m, f64::NAN, 1, &opts, s.as_mut_ptr()),
            HcStatus::Ok
        );
        let s = s.assume_init();
        assert_eq!(s.verdict, HcVerdict::Inconclusive);
        assert!(s.fd_check.is_nan());
        hc_model_free(m);
    }
}

#[test]
fn bad_options_are_rejected() {
    let m = model("vdp", None).unwrap();
    let mut opts = hc_options_default();
    opts.rel_tol = -1.0;
    let x0 = [1.0, 3.0];
    let mut traj = ptr::null_mut();
    unsafe {
        let st = hc_simulate(m, x0.as_ptr(), 2, 1.0, &opts, &mut traj);
        assert_eq!(st, HcStatus::InvalidArgument);
        assert!(last_error().contains("rel_tol"));
        hc_model_free(m);
    }
}

#[test]
fn error_buffer_truncates() {
    let _ = model("nothing-here", None);
    let mut buf = [1 as c_char; 4];
    let n = unsafe { hc_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 3);
    assert_eq!(buf[3], 0);
    assert_eq!(unsafe { hc_last_error(ptr::null_mut(), 0) }, n);
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        hc_model_free(ptr::null_mut());
        hc_trajectory_free(ptr::null_mut());
        assert_eq!(hc_model_dimension(ptr::null()), 0);
        assert_eq!(hc_trajectory_impact_count(ptr::null()), 0);
        assert!(hc_trajectory_duration(ptr::null()).is_nan());
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hybrid_cycles.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "hc_model_new",
        "hc_simulate",
        "hc_stability",
        "hc_last_error",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler, skipping syntax check");
        return;
    };
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
