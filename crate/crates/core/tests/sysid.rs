mod common;

use common::*;
use dwig::sysid::*;
use dwig::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn truth_theta() -> Vec<f64> {
    truth_model().to_theta().as_slice().to_vec()
}

#[test]
fn truth_model_is_stable_and_minimum_phase() {
    let m = truth_model();
    assert!(stability_check(&m).stable);
    let max_root = stability_check(&m).root_magnitudes[0];
    assert!((max_root - 0.7977).abs() < 1e-3, "{max_root}");
    // Zeros of B reuse the pole machinery on the monic polynomial B / b0.
    let b = m.b();
    let zeros = ArxModel::new(b[1..].iter().map(|v| v / b[0]).collect(), vec![1.0; 5]).unwrap();
    assert!(stability_check(&zeros).stable);
}

#[test]
fn noise_free_recovery_is_exact() {
    let u = prbs(2000, 0xBEEF);
    let y = arx_simulate(&truth_model(), &u, &vec![0.0; u.len()]).unwrap();
    let report = identify(&u, &y, 5, 1.0, 1e6).unwrap();
    let err = max_abs_diff(&report.theta, &truth_theta());
    assert!(err < 1e-6, "max parameter error {err:e}");
    assert!(report.prediction_error_variance < 1e-12);
}

#[test]
fn rls_with_unit_forgetting_matches_batch_least_squares() {
    let u = prbs(1500, 0x1234);
    let noise = gaussian(u.len(), 0.01, 11);
    let y = arx_simulate(&truth_model(), &u, &noise).unwrap();
    // A large prior makes the regularized recursive solution close to batch LS.
    let report = identify(&u, &y, 5, 1.0, 1e6).unwrap();
    let batch = batch_least_squares(&u, &y, 5);
    let err = max_abs_diff(&report.theta, &batch);
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn noisy_tracking_stays_within_bound_over_seeds() {
    let u = prbs(5000, 0xACE1);
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let noise = gaussian(u.len(), 0.01, 100 + seed);
        let y = arx_simulate(&truth_model(), &u, &noise).unwrap();
        let report = identify(&u, &y, 5, 0.995, 1e3).unwrap();
        worst = worst.max(max_abs_diff(&report.theta, &truth_theta()));
    }
    assert!(worst < 0.05, "worst parameter error {worst}");
}

#[test]
fn covariance_stays_symmetric_positive_definite() {
    let u = prbs(3000, 0x0F0F);
    let noise = gaussian(u.len(), 0.01, 5);
    let y = arx_simulate(&truth_model(), &u, &noise).unwrap();
    let mut rls = RlsState::new(5, 0.98, 1e3).unwrap();
    let mut w = RegressorWindow::new(5);
    for t in 0..u.len() {
        if t >= 5 {
            rls.update(&w.regressor(), y[t]).unwrap();
            let p = rls.covariance();
            assert_eq!(p, &p.transpose());
            assert!(rls.min_eigenvalue() > 0.0, "step {t}");
        }
        w.push_output(y[t]);
        w.push_input(u[t]);
    }
}

#[test]
fn forgetting_inflates_covariance_without_excitation() {
    let lambda = 0.97;
    let mut rls = RlsState::new(3, lambda, 2.0).unwrap();
    let phi = DVector::zeros(5);
    for k in 1..=10 {
        let before = rls.covariance().trace();
        rls.update(&phi, 0.0).unwrap();
        let after = rls.covariance().trace();
        assert!((after - before / lambda).abs() < 1e-12 * after, "step {k}");
    }
}

#[test]
fn predictor_matches_simulator() {
    let m = truth_model();
    let u = prbs(200, 0x7777);
    let y = arx_simulate(&m, &u, &vec![0.0; u.len()]).unwrap();
    let mut w = RegressorWindow::new(5);
    for t in 0..u.len() {
        assert!((arx_predict(&m, &w).unwrap() - y[t]).abs() < 1e-12);
        w.push_output(y[t]);
        w.push_input(u[t]);
    }
}

#[test]
fn unstable_model_diverges_in_simulation() {
    let m = ArxModel::new(vec![-2.5, 1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(!stability_check(&m).stable);
    let u = vec![1.0; 400];
    assert!(matches!(arx_simulate(&m, &u, &vec![0.0; 400]), Err(Error::DivergedState { .. })));
}

#[test]
fn identify_rejects_short_or_mismatched_input() {
    assert!(identify(&[1.0; 5], &[1.0; 5], 5, 1.0, 1e3).is_err());
    assert!(identify(&[1.0; 50], &[1.0; 49], 5, 1.0, 1e3).is_err());
    assert!(identify(&[1.0; 50], &[1.0; 50], 9, 1.0, 1e3).is_err());
}

#[test]
fn lower_orders_fit_lower_order_plants() {
    // Second-order plant identified with order 2 and with order 4.
    let m2 = ArxModel::new(vec![-0.6], vec![0.8, 0.3]).unwrap();
    let u = prbs(1000, 0x2222);
    let y = arx_simulate(&m2, &u, &vec![0.0; u.len()]).unwrap();
    let r2 = identify(&u, &y, 2, 1.0, 1e6).unwrap();
    assert!(max_abs_diff(&r2.theta, &[-0.6, 0.8, 0.3]) < 1e-6);
    let r4 = identify(&u, &y, 4, 1.0, 1e6).unwrap();
    assert!(r4.prediction_error_variance < 1e-12);
}

proptest! {
    #[test]
    fn value_and_in_place_updates_agree(
        phi in prop::collection::vec(-3.0f64..3.0, 9),
        y in -5.0f64..5.0,
        lambda in 0.91f64..=1.0,
    ) {
        let rls = RlsState::new(5, lambda, 10.0).unwrap();
        let phi = DVector::from_vec(phi);
        let (next, e1) = rls_update(&rls, &phi, y).unwrap();
        let mut inplace = rls.clone();
        let e2 = inplace.update(&phi, y).unwrap();
        prop_assert_eq!(e1, e2);
        prop_assert_eq!(next, inplace);
    }

    #[test]
    fn single_update_keeps_covariance_positive(
        phi in prop::collection::vec(-10.0f64..10.0, 9),
        y in -5.0f64..5.0,
        lambda in 0.91f64..=1.0,
    ) {
        let mut rls = RlsState::new(5, lambda, 100.0).unwrap();
        rls.update(&DVector::from_vec(phi), y).unwrap();
        prop_assert!(rls.min_eigenvalue() > 0.0);
        let p: &DMatrix<f64> = rls.covariance();
        prop_assert_eq!(p, &p.transpose());
    }
}
