//! Penalized minimum-variance control law and the dither noise source.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sysid::{shift_in, ArxModel};

/// Smallest admissible `|b0 + rho|`.
pub const REALIZABILITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvConfig {
    /// Control penalty factor.
    pub rho: f64,
    /// Reference for the controlled output.
    pub w: f64,
    /// Steady-state controller output.
    pub u_star: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub dither_variance: f64,
}

impl MvConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.rho, self.w, self.u_star, self.u_min, self.u_max, self.dither_variance];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("controller settings must be finite"));
        }
        if self.rho < 0.0 {
            return Err(Error::invalid(format!("rho must be non-negative, got {}", self.rho)));
        }
        if self.u_min >= self.u_max {
            return Err(Error::invalid(format!("u_min ({}) must be below u_max ({})", self.u_min, self.u_max)));
        }
        if self.dither_variance < 0.0 {
            return Err(Error::invalid("dither variance must be non-negative"));
        }
        Ok(())
    }
}

/// Outputs `y(t) .. y(t-n+2)` and controls `u(t-1) .. u(t-n+1)`, most recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlHistory {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

impl ControlHistory {
    pub fn new(order: usize) -> Self {
        Self::filled(order, 0.0, 0.0)
    }

    pub fn filled(order: usize, y: f64, u: f64) -> Self {
        assert!(order >= 1, "model order must be positive");
        Self { y: vec![y; order - 1], u: vec![u; order - 1] }
    }

    /// Record the output sampled at the current step, before computing the control.
    pub fn record_output(&mut self, y: f64) {
        shift_in(&mut self.y, y);
    }

    /// Record the control applied at the current step.
    pub fn record_input(&mut self, u: f64) {
        shift_in(&mut self.u, u);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// Control after clamping to `[u_min, u_max]`.
    pub applied: f64,
    pub unclamped: f64,
}

/// Minimum-variance law with control penalty, realized over the common
/// denominator `B(q^-1) + rho`:
///
/// ```text
/// (b0 + rho) u(t) = w + sum_i a_i y(t-i+1) - sum_{j>=1} b_j u(t-j) + rho u*
/// ```
pub fn mv_control(config: &MvConfig, estimates: &ArxModel, history: &ControlHistory) -> Result<ControlOutput> {
    let n = estimates.order();
    if history.y.len() != n - 1 {
        return Err(Error::DimensionMismatch { expected: n - 1, got: history.y.len() });
    }
    if history.u.len() != n - 1 {
        return Err(Error::DimensionMismatch { expected: n - 1, got: history.u.len() });
    }
    let b = estimates.b();
    let denominator = b[0] + config.rho;
    if !(denominator.abs() > REALIZABILITY_EPS) {
        return Err(Error::UnrealizableLaw { denominator: denominator.abs() });
    }
    let ar: f64 = estimates.a().iter().zip(&history.y).map(|(a, y)| a * y).sum();
    let ma: f64 = b[1..].iter().zip(&history.u).map(|(b, u)| b * u).sum();
    let unclamped = (config.w + ar - ma + config.rho * config.u_star) / denominator;
    if !unclamped.is_finite() {
        return Err(Error::UnrealizableLaw { denominator: denominator.abs() });
    }
    Ok(ControlOutput { applied: unclamped.clamp(config.u_min, config.u_max), unclamped })
}

/// Zero-mean Gaussian sample with the given variance.
pub fn dither<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64) -> f64 {
    if variance <= 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    variance.sqrt() * z
}

/// Seeded, reproducible dither generator owned by one control loop.
#[derive(Debug, Clone)]
pub struct DitherSource {
    rng: ChaCha8Rng,
    variance: f64,
}

impl DitherSource {
    pub fn new(seed: u64, variance: f64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), variance }
    }

    pub fn sample(&mut self) -> f64 {
        dither(&mut self.rng, self.variance)
    }
}

/// Source of the steady-state controller output `u*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UStarMode {
    /// Fixed value from the configuration.
    #[default]
    Constant,
    /// First-order average of the applied control.
    Averaged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UStarTracker {
    mode: UStarMode,
    value: f64,
    time_constant: f64,
}

impl UStarTracker {
    pub fn new(mode: UStarMode, initial: f64, time_constant: f64) -> Self {
        Self { mode, value: initial, time_constant }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn observe(&mut self, applied: f64, ts: f64) {
        if self.mode == UStarMode::Averaged {
            let alpha = (ts / self.time_constant).min(1.0);
            self.value += alpha * (applied - self.value);
        }
    }
}
