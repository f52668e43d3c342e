mod common;

use common::*;
use dwig::control::*;
use dwig::sysid::{arx_predict, ArxModel, RegressorWindow};
use dwig::Error;
use proptest::prelude::*;

fn open_cfg(rho: f64, w: f64, u_star: f64) -> MvConfig {
    MvConfig { rho, w, u_star, u_min: -1e9, u_max: 1e9, dither_variance: 0.0 }
}

/// Closes the loop around the ARX plant itself, with the controller using the
/// true coefficients. `reference(t)` is the set point when computing `u(t)`.
/// Returns `y(0..n)`.
fn closed_loop(model: &ArxModel, n: usize, reference: impl Fn(usize) -> f64, noise: &[f64]) -> Vec<f64> {
    let order = model.order();
    let mut plant = RegressorWindow::new(order);
    let mut history = ControlHistory::new(order);
    let mut y = 0.0;
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        out.push(y);
        history.record_output(y);
        let u = mv_control(&open_cfg(0.0, reference(t), 0.0), model, &history).unwrap().applied;
        history.record_input(u);
        plant.push_output(y);
        plant.push_input(u);
        y = arx_predict(model, &plant).unwrap() + noise[t];
    }
    out
}

#[test]
fn deadbeat_tracking_after_reference_step() {
    let m = truth_model();
    let n = 60;
    let step_at = 20;
    let w = |t: usize| if t >= step_at { 2.5 } else { 1.0 };
    let y = closed_loop(&m, n, w, &vec![0.0; n]);
    // The set point chosen at t is reached at t + 1.
    for t in 1..n {
        assert!((y[t] - w(t - 1)).abs() < 1e-9, "t = {t}: {} vs {}", y[t], w(t - 1));
    }
}

#[test]
fn output_variance_matches_noise_floor() {
    let m = truth_model();
    let n = 10_000;
    let noise = gaussian(n, 0.01, 42);
    let y = closed_loop(&m, n, |_| 1.0, &noise);
    let e: Vec<f64> = y[1..].iter().map(|v| v - 1.0).collect();
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64;
    assert!((var / 0.01 - 1.0).abs() < 0.15, "variance {var}");
}

fn fixed_history() -> ControlHistory {
    let mut h = ControlHistory::new(5);
    h.y = vec![1.02, 0.97, 1.05, 0.99];
    h.u = vec![0.52, 0.48, 0.55, 0.47];
    h
}

#[test]
fn penalty_drives_control_to_steady_value() {
    let m = truth_model();
    let u_star = 0.5;
    let dev: Vec<f64> = [1.0, 1e2, 1e4, 1e6]
        .iter()
        .map(|&rho| (mv_control(&open_cfg(rho, 1.3, u_star), &m, &fixed_history()).unwrap().unclamped - u_star).abs())
        .collect();
    assert!(dev.windows(2).all(|w| w[1] < w[0]), "{dev:?}");
    assert!(dev[3] / u_star < 1e-5, "{dev:?}");
}

#[test]
fn unrealizable_law_reported() {
    let m = ArxModel::new(vec![0.1, 0.0, 0.0, 0.0], vec![-0.2, 0.1, 0.0, 0.0, 0.0]).unwrap();
    let r = mv_control(&open_cfg(0.2, 1.0, 0.0), &m, &fixed_history());
    assert!(matches!(r, Err(Error::UnrealizableLaw { .. })));
}

#[test]
fn history_length_checked() {
    let r = mv_control(&open_cfg(0.0, 1.0, 0.0), &truth_model(), &ControlHistory::new(4));
    assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
}

#[test]
fn dither_sample_variance_within_bounds() {
    let mut d = DitherSource::new(2024, 0.01);
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| d.sample()).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((0.0094..=0.0106).contains(&var), "{var}");
    assert!(mean.abs() < 3.0 * (0.01f64 / n as f64).sqrt() * 1.5);
}

#[test]
fn dither_is_reproducible_and_silent_at_zero_variance() {
    let a: Vec<f64> = {
        let mut d = DitherSource::new(9, 0.01);
        (0..100).map(|_| d.sample()).collect()
    };
    let mut d = DitherSource::new(9, 0.01);
    assert!(a.iter().all(|&x| x == d.sample()));
    let mut z = DitherSource::new(9, 0.0);
    assert!((0..100).all(|_| z.sample() == 0.0));
}

#[test]
fn averaged_u_star_follows_applied_control() {
    let mut c = UStarTracker::new(UStarMode::Averaged, 0.0, 10.0);
    for _ in 0..10_000 {
        c.observe(1.0, 0.01);
    }
    // 100 s is ten time constants.
    assert!((c.value() - 1.0).abs() < 1e-4);
    let mut k = UStarTracker::new(UStarMode::Constant, 0.3, 10.0);
    k.observe(1.0, 0.01);
    assert_eq!(k.value(), 0.3);
}

proptest! {
    #[test]
    fn applied_control_respects_limits(
        a in prop::collection::vec(-0.5f64..0.5, 4),
        b in prop::collection::vec(-1.0f64..1.0, 5),
        y in prop::collection::vec(-10.0f64..10.0, 4),
        u in prop::collection::vec(-10.0f64..10.0, 4),
        w in -20.0f64..20.0,
        rho in 0.0f64..5.0,
        lo in -3.0f64..0.0,
        width in 0.1f64..6.0,
    ) {
        let m = ArxModel::new(a, b).unwrap();
        let cfg = MvConfig { rho, w, u_star: 0.0, u_min: lo, u_max: lo + width, dither_variance: 0.0 };
        let h = ControlHistory { y, u };
        if let Ok(out) = mv_control(&cfg, &m, &h) {
            prop_assert!(out.applied >= cfg.u_min && out.applied <= cfg.u_max);
            if out.unclamped >= cfg.u_min && out.unclamped <= cfg.u_max {
                prop_assert_eq!(out.applied, out.unclamped);
            }
        }
    }
}
