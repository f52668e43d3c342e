//! Reduced discrete ARX model and its recursive least-squares estimator.
//!
//! The model realizes
//!
//! ```text
//! y(t) = -a1 y(t-1) - ... - a_{n-1} y(t-n+1) + b0 u(t-1) + ... + b_{n-1} u(t-n)
//! ```
//!
//! i.e. `A(q^-1) y = q^-1 B(q^-1) u` with monic `A` of degree `n-1` and `B` of
//! degree `n-1`. Parameter vectors are always packed as
//! `(a1..a_{n-1}, b0..b_{n-1})`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 5;
pub const MIN_ESTIMATOR_ORDER: usize = 2;
pub const MAX_ESTIMATOR_ORDER: usize = 8;
/// Covariance trace above which the estimator falls back to its initial covariance.
pub const COVARIANCE_TRACE_LIMIT: f64 = 1e8;
const SIMULATION_BOUND: f64 = 1e9;
const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxModel {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl ArxModel {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::invalid("ARX numerator needs at least one coefficient"));
        }
        if a.len() + 1 != b.len() {
            return Err(Error::DimensionMismatch { expected: b.len() - 1, got: a.len() });
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::invalid("ARX coefficients must be finite"));
        }
        Ok(Self { a, b })
    }

    pub fn zeros(order: usize) -> Self {
        assert!(order >= 1, "model order must be positive");
        Self { a: vec![0.0; order - 1], b: vec![0.0; order] }
    }

    pub fn order(&self) -> usize {
        self.b.len()
    }

    /// Denominator coefficients `a1..a_{n-1}`; `a0 = 1` is implicit.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Numerator coefficients `b0..b_{n-1}`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn n_params(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn to_theta(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_params(), self.a.iter().chain(&self.b).copied())
    }

    pub fn from_theta(order: usize, theta: &[f64]) -> Result<Self> {
        if order == 0 || theta.len() != 2 * order - 1 {
            return Err(Error::DimensionMismatch { expected: 2 * order.max(1) - 1, got: theta.len() });
        }
        let (a, b) = theta.split_at(order - 1);
        Self::new(a.to_vec(), b.to_vec())
    }

    /// Steady-state gain `B(1) / A(1)`, `None` when `A(1) = 0`.
    pub fn static_gain(&self) -> Option<f64> {
        let a1 = 1.0 + self.a.iter().sum::<f64>();
        (a1 != 0.0).then(|| self.b.iter().sum::<f64>() / a1)
    }
}

/// Past outputs and inputs needed to predict the current output.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorWindow {
    /// `y(t-1) .. y(t-n+1)`, most recent first.
    pub past_y: Vec<f64>,
    /// `u(t-1) .. u(t-n)`, most recent first.
    pub past_u: Vec<f64>,
}

impl RegressorWindow {
    pub fn new(order: usize) -> Self {
        Self::filled(order, 0.0, 0.0)
    }

    /// Window as if the signals had been constant at `(y, u)` forever.
    pub fn filled(order: usize, y: f64, u: f64) -> Self {
        assert!(order >= 1, "model order must be positive");
        Self { past_y: vec![y; order - 1], past_u: vec![u; order] }
    }

    pub fn order(&self) -> usize {
        self.past_u.len()
    }

    /// Shift in the output observed at the current step.
    pub fn push_output(&mut self, y: f64) {
        shift_in(&mut self.past_y, y);
    }

    /// Shift in the input applied at the current step.
    pub fn push_input(&mut self, u: f64) {
        shift_in(&mut self.past_u, u);
    }

    /// `(-y(t-1) .. -y(t-n+1), u(t-1) .. u(t-n))`, so that `prediction = theta' phi`.
    pub fn regressor(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.past_y.len() + self.past_u.len(),
            self.past_y.iter().map(|y| -y).chain(self.past_u.iter().copied()),
        )
    }
}

pub(crate) fn shift_in(buf: &mut [f64], v: f64) {
    if buf.is_empty() {
        return;
    }
    buf.rotate_right(1);
    buf[0] = v;
}

pub fn arx_predict(model: &ArxModel, window: &RegressorWindow) -> Result<f64> {
    if window.past_u.len() != model.order() {
        return Err(Error::DimensionMismatch { expected: model.order(), got: window.past_u.len() });
    }
    if window.past_y.len() != model.a.len() {
        return Err(Error::DimensionMismatch { expected: model.a.len(), got: window.past_y.len() });
    }
    let ar: f64 = model.a.iter().zip(&window.past_y).map(|(a, y)| a * y).sum();
    let x: f64 = model.b.iter().zip(&window.past_u).map(|(b, u)| b * u).sum();
    Ok(x - ar)
}

/// Runs the difference equation from a zero window, adding `noise[t]` to each output.
pub fn arx_simulate(model: &ArxModel, inputs: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if inputs.len() != noise.len() {
        return Err(Error::DimensionMismatch { expected: inputs.len(), got: noise.len() });
    }
    let mut window = RegressorWindow::new(model.order());
    let mut out = Vec::with_capacity(inputs.len());
    for (t, (&u, &e)) in inputs.iter().zip(noise).enumerate() {
        let y = arx_predict(model, &window)? + e;
        if !y.is_finite() || y.abs() > SIMULATION_BOUND {
            return Err(Error::DivergedState { time: t as f64, detail: format!("ARX output {y} at sample {t}") });
        }
        out.push(y);
        window.push_output(y);
        window.push_input(u);
    }
    Ok(out)
}

/// Exponentially weighted recursive least-squares estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    theta: DVector<f64>,
    p: DMatrix<f64>,
    lambda: f64,
    p0: f64,
    order: usize,
    updates: u64,
    resets: u64,
}

impl RlsState {
    /// Zero initial estimate with covariance `p0 * I`.
    pub fn new(order: usize, lambda: f64, p0: f64) -> Result<Self> {
        if !(MIN_ESTIMATOR_ORDER..=MAX_ESTIMATOR_ORDER).contains(&order) {
            return Err(Error::invalid(format!(
                "estimator order must lie in {MIN_ESTIMATOR_ORDER}..={MAX_ESTIMATOR_ORDER}, got {order}"
            )));
        }
        if !(lambda > 0.9 && lambda <= 1.0) {
            return Err(Error::invalid(format!("forgetting factor must lie in (0.9, 1], got {lambda}")));
        }
        if !(p0 > 0.0 && p0.is_finite()) {
            return Err(Error::invalid(format!("initial covariance scale must be positive, got {p0}")));
        }
        let m = 2 * order - 1;
        Ok(Self { theta: DVector::zeros(m), p: DMatrix::identity(m, m) * p0, lambda, p0, order, updates: 0, resets: 0 })
    }

    pub fn with_theta(mut self, theta: DVector<f64>) -> Result<Self> {
        if theta.len() != self.theta.len() {
            return Err(Error::DimensionMismatch { expected: self.theta.len(), got: theta.len() });
        }
        self.theta = theta;
        Ok(self)
    }

    /// Replaces the covariance; `p` must be square of the parameter dimension.
    pub fn with_covariance(mut self, p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != self.theta.len() || p.ncols() != self.theta.len() {
            return Err(Error::DimensionMismatch { expected: self.theta.len(), got: p.nrows() });
        }
        self.p = p;
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Number of covariance resets triggered by the trace guard.
    pub fn resets(&self) -> u64 {
        self.resets
    }

    pub fn model(&self) -> ArxModel {
        let (a, b) = self.theta.as_slice().split_at(self.order - 1);
        ArxModel { a: a.to_vec(), b: b.to_vec() }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.p.clone().symmetric_eigenvalues().min()
    }

    /// One estimator step; returns the a-priori prediction error.
    ///
    /// The state is left untouched when the update would produce a
    /// non-finite value.
    pub fn update(&mut self, regressor: &DVector<f64>, measured: f64) -> Result<f64> {
        if regressor.len() != self.theta.len() {
            return Err(Error::DimensionMismatch { expected: self.theta.len(), got: regressor.len() });
        }
        let err = measured - self.theta.dot(regressor);
        let p_phi = &self.p * regressor;
        let denom = self.lambda + regressor.dot(&p_phi);
        let gain = &p_phi / denom;
        let theta = &self.theta + &gain * err;
        let mut p = (&self.p - &gain * p_phi.transpose()) / self.lambda;
        p = (&p + p.transpose()) * 0.5;

        if !err.is_finite() || theta.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteUpdate);
        }
        self.theta = theta;
        self.p = p;
        self.updates += 1;

        let trace = self.p.trace();
        if trace > COVARIANCE_TRACE_LIMIT {
            log::warn!(
                "covariance trace {trace:e} exceeded {COVARIANCE_TRACE_LIMIT:e} after {} updates; resetting",
                self.updates
            );
            let m = self.theta.len();
            self.p = DMatrix::identity(m, m) * self.p0;
            self.resets += 1;
        }
        Ok(err)
    }
}

/// Value-semantics form of [`RlsState::update`].
pub fn rls_update(state: &RlsState, regressor: &DVector<f64>, measured: f64) -> Result<(RlsState, f64)> {
    let mut next = state.clone();
    let e = next.update(regressor, measured)?;
    Ok((next, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// Magnitudes of the roots of `A(z)`, sorted descending.
    pub root_magnitudes: Vec<f64>,
}

/// Roots of the monic `A(z) = z^{n-1} + a1 z^{n-2} + ... + a_{n-1}` via
/// companion-matrix eigenvalues. Roots on the unit circle count as unstable.
pub fn stability_check(model: &ArxModel) -> StabilityReport {
    let d = model.a.len();
    if d == 0 {
        return StabilityReport { stable: true, root_magnitudes: Vec::new() };
    }
    let mut c = DMatrix::zeros(d, d);
    for (j, a) in model.a.iter().enumerate() {
        c[(0, j)] = -a;
    }
    for i in 1..d {
        c[(i, i - 1)] = 1.0;
    }
    let mut mags: Vec<f64> = c.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    mags.sort_by(|x, y| y.total_cmp(x));
    let stable = mags.iter().all(|m| *m < 1.0 - STABILITY_MARGIN);
    StabilityReport { stable, root_magnitudes: mags }
}

/// Result of replaying the estimator over recorded data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifyReport {
    pub order: usize,
    pub lambda: f64,
    pub samples: usize,
    pub model: ArxModel,
    /// Parameters in `(a1.., b0..)` order.
    pub theta: Vec<f64>,
    /// Mean squared a-priori prediction error over the second half of the data.
    pub prediction_error_variance: f64,
    pub stability: StabilityReport,
    pub covariance_resets: u64,
}

/// Offline RLS over `(u, y)` records, where `u[t]` acts on `y[t + 1]`.
///
/// Updates start once the regressor window holds recorded data only.
pub fn identify(u: &[f64], y: &[f64], order: usize, lambda: f64, p0: f64) -> Result<IdentifyReport> {
    if u.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: y.len() });
    }
    let mut rls = RlsState::new(order, lambda, p0)?;
    if u.len() <= order {
        return Err(Error::invalid(format!("need more than {order} samples, got {}", u.len())));
    }
    let mut window = RegressorWindow::new(order);
    let half = u.len() / 2;
    let (mut sq, mut count) = (0.0, 0usize);
    for t in 0..u.len() {
        if t >= order {
            let e = rls.update(&window.regressor(), y[t])?;
            if t >= half {
                sq += e * e;
                count += 1;
            }
        }
        window.push_output(y[t]);
        window.push_input(u[t]);
    }
    let model = rls.model();
    Ok(IdentifyReport {
        order,
        lambda,
        samples: u.len(),
        theta: rls.theta().as_slice().to_vec(),
        prediction_error_variance: if count > 0 { sq / count as f64 } else { 0.0 },
        stability: stability_check(&model),
        model,
        covariance_resets: rls.resets(),
    })
}
