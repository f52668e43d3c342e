use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use dwig_ffi::*;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn last_error() -> String {
    let p = dwig_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn nominal() -> DwigInputs {
    DwigInputs { u_d2: 0.0, u_q2: 1.0, tm: 0.1, r_load: 1.0, u_dr: 0.0, u_qr: 0.0 }
}

#[test]
fn plant_equilibrium_and_step() {
    unsafe {
        let mut plant = ptr::null_mut();
        assert_eq!(dwig_plant_new_default(&mut plant), DwigStatus::Ok);
        let u = nominal();
        let mut s = DwigState::default();
        assert_eq!(dwig_plant_operating_point(plant, &u, &mut s), DwigStatus::Ok);
        let mut dx = [1.0; 7];
        assert_eq!(dwig_plant_derivative(plant, &s, &u, dx.as_mut_ptr()), DwigStatus::Ok);
        assert!(dx.iter().all(|v| v.abs() < 1e-8), "{dx:?}");

        let mut v0 = 0.0;
        assert_eq!(dwig_plant_terminal_voltage(plant, &s, u.r_load, &mut v0), DwigStatus::Ok);
        for _ in 0..100 {
            assert_eq!(dwig_plant_step(plant, &mut s, &u, 1e-3), DwigStatus::Ok);
        }
        let mut v1 = 0.0;
        dwig_plant_terminal_voltage(plant, &s, u.r_load, &mut v1);
        assert!((v1 - v0).abs() < 1e-9);

        assert_eq!(dwig_plant_step(plant, &mut s, &u, 1.0), DwigStatus::InvalidArgument);
        assert!(last_error().contains("integration step"));
        dwig_plant_free(plant);
    }
}

#[test]
fn plant_from_toml_reports_missing_key() {
    let text = std::fs::read_to_string(root().join("configs/machine_default.toml")).unwrap();
    unsafe {
        let mut plant = ptr::null_mut();
        let ok = CString::new(text.clone()).unwrap();
        assert_eq!(dwig_plant_from_toml(ok.as_ptr(), &mut plant), DwigStatus::Ok);
        dwig_plant_free(plant);

        let broken: String = text.lines().filter(|l| !l.starts_with("r2 ")).map(|l| format!("{l}\n")).collect();
        let broken = CString::new(broken).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(dwig_plant_from_toml(broken.as_ptr(), &mut none), DwigStatus::Config);
        assert!(none.is_null());
        assert!(last_error().contains("r2"));
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        assert_eq!(dwig_plant_new_default(ptr::null_mut()), DwigStatus::NullPointer);
        let mut s = DwigState::default();
        assert_eq!(dwig_plant_operating_point(ptr::null(), &nominal(), &mut s), DwigStatus::NullPointer);
        assert!(last_error().contains("plant"));
        assert_eq!(dwig_scenario_load(ptr::null(), &mut ptr::null_mut()), DwigStatus::NullPointer);
        dwig_plant_free(ptr::null_mut());
        dwig_rls_free(ptr::null_mut());
        dwig_log_free(ptr::null_mut());
        dwig_scenario_free(ptr::null_mut());
        assert_eq!(dwig_log_num_rows(ptr::null()), 0);
    }
}

#[test]
fn success_clears_last_error() {
    unsafe {
        assert_eq!(dwig_plant_new_default(ptr::null_mut()), DwigStatus::NullPointer);
        assert!(!dwig_last_error().is_null());
        let mut plant = ptr::null_mut();
        assert_eq!(dwig_plant_new_default(&mut plant), DwigStatus::Ok);
        assert!(dwig_last_error().is_null());
        dwig_plant_free(plant);
    }
}

#[test]
fn rls_recovers_first_order_model() {
    unsafe {
        let mut rls = ptr::null_mut();
        assert_eq!(dwig_rls_new(2, 1.0, 1e6, &mut rls), DwigStatus::Ok);
        assert_eq!(dwig_rls_num_params(rls), 3);
        // y(t) = 0.5 y(t-1) + 2 u(t-1) + 0.5 u(t-2), i.e. a1 = -0.5.
        let (mut y1, mut u1, mut u2) = (0.0, 0.0, 0.0);
        for t in 0..200 {
            let u = if (t * 7919) % 13 < 6 { 1.0 } else { -1.0 };
            let y = 0.5 * y1 + 2.0 * u1 + 0.5 * u2;
            let phi = [-y1, u1, u2];
            assert_eq!(dwig_rls_update(rls, phi.as_ptr(), 3, y, ptr::null_mut()), DwigStatus::Ok);
            (y1, u2, u1) = (y, u1, u);
        }
        let mut theta = [0.0; 3];
        assert_eq!(dwig_rls_theta(rls, theta.as_mut_ptr(), 3), DwigStatus::Ok);
        assert!(
            (theta[0] + 0.5).abs() < 1e-6 && (theta[1] - 2.0).abs() < 1e-6 && (theta[2] - 0.5).abs() < 1e-6,
            "{theta:?}"
        );
        let mut eig = 0.0;
        assert_eq!(dwig_rls_min_eigenvalue(rls, &mut eig), DwigStatus::Ok);
        assert!(eig > 0.0);
        assert_eq!(dwig_rls_theta(rls, theta.as_mut_ptr(), 2), DwigStatus::InvalidArgument);
        assert_eq!(dwig_rls_update(rls, theta.as_ptr(), 2, 0.0, ptr::null_mut()), DwigStatus::InvalidArgument);
        dwig_rls_free(rls);

        let mut bad = ptr::null_mut();
        assert_eq!(dwig_rls_new(5, 0.5, 1e3, &mut bad), DwigStatus::InvalidArgument);
    }
}

#[test]
fn mv_control_clamps_and_flags_unrealizable() {
    unsafe {
        let a = [0.0];
        let b = [1.0, 0.0];
        let hy = [0.0];
        let hu = [0.0];
        let mut out = DwigControlOutput::default();
        let cfg = DwigMvConfig { rho: 0.0, w: 5.0, u_star: 0.0, u_min: -1.0, u_max: 1.0 };
        assert_eq!(
            dwig_mv_control(&cfg, 2, a.as_ptr(), b.as_ptr(), hy.as_ptr(), hu.as_ptr(), &mut out),
            DwigStatus::Ok
        );
        assert_eq!((out.applied, out.unclamped), (1.0, 5.0));

        let zero_b = [0.0, 0.0];
        assert_eq!(
            dwig_mv_control(&cfg, 2, a.as_ptr(), zero_b.as_ptr(), hy.as_ptr(), hu.as_ptr(), &mut out),
            DwigStatus::Unrealizable
        );
    }
}

#[test]
fn scenario_run_metrics_and_csv() {
    let path = CString::new(root().join("configs/scenarios/case3.toml").to_str().unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = CString::new(dir.path().join("log.csv").to_str().unwrap()).unwrap();
    unsafe {
        let mut scn = ptr::null_mut();
        assert_eq!(dwig_scenario_load(path.as_ptr(), &mut scn), DwigStatus::Ok, "{}", last_error());
        assert_eq!(dwig_scenario_set_tuning(scn, 7, 0.995, 0.0725), DwigStatus::Ok);
        let mut log = ptr::null_mut();
        assert_eq!(dwig_scenario_run(scn, &mut log), DwigStatus::Ok, "{}", last_error());
        assert_eq!(dwig_log_num_rows(log), 1501);
        assert_eq!(dwig_log_num_theta(log), 9);

        let mut row = DwigLogRow::default();
        assert_eq!(dwig_log_row(log, 1500, &mut row), DwigStatus::Ok);
        assert!((row.time - 15.0).abs() < 1e-9);
        assert_eq!(dwig_log_row(log, 1501, &mut row), DwigStatus::InvalidArgument);
        let mut theta = [0.0; 9];
        assert_eq!(dwig_log_theta(log, 1500, theta.as_mut_ptr(), 9), DwigStatus::Ok);
        assert!(theta.iter().any(|v| *v != 0.0));

        let mut m = DwigMetrics::default();
        assert_eq!(dwig_log_metrics(log, 0.01, 5.0, &mut m), DwigStatus::Ok);
        assert_eq!(m.settled, 1);
        assert!(m.control_spike > 0.0);

        assert_eq!(dwig_log_write_csv(log, csv.as_ptr()), DwigStatus::Ok);
        let text = std::fs::read_to_string(dir.path().join("log.csv")).unwrap();
        assert_eq!(text.lines().count(), 1502);

        assert_eq!(dwig_scenario_set_tuning(scn, 7, 2.0, 0.0725), DwigStatus::InvalidArgument);
        dwig_log_free(log);
        dwig_scenario_free(scn);
    }
}

#[test]
fn divergence_maps_to_status() {
    let path = CString::new(root().join("configs/scenarios/diverge.toml").to_str().unwrap()).unwrap();
    unsafe {
        let mut scn = ptr::null_mut();
        assert_eq!(dwig_scenario_load(path.as_ptr(), &mut scn), DwigStatus::Ok);
        let mut log = ptr::null_mut();
        assert_eq!(dwig_scenario_run(scn, &mut log), DwigStatus::Diverged);
        assert!(log.is_null());
        assert!(last_error().contains("diverged"));
        dwig_scenario_free(scn);
    }
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(dwig_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/dwig.h")).unwrap();
    for name in [
        "dwig_last_error",
        "dwig_plant_new_default",
        "dwig_plant_step",
        "dwig_rls_update",
        "dwig_mv_control",
        "dwig_scenario_run",
        "dwig_log_metrics",
        "DWIG_STATUS_DIVERGED",
        "typedef struct DwigPlant DwigPlant",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
