//! Nonlinear dq0 model of the double-wound induction generator.
//!
//! The machine has three winding sets: winding 1 feeds a resistive load,
//! winding 2 is the separate excitation winding and the third set is the
//! rotor cage. The six flux linkages plus the rotor electrical speed form the
//! seven integrated states. Everything is per-unit; time is in seconds and the
//! electrical equations are scaled by the base angular frequency
//! `omega_base`.
//!
//! State ordering is always `(d1, q1, d2, q2, dr, qr)` for fluxes and
//! currents, with the rotor speed appended as the seventh state.

use nalgebra::{Matrix6, SVector, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::rk4_step;

pub type FluxVector6 = Vector6<f64>;
/// Seven-component state or derivative vector: six fluxes then rotor speed.
pub type StateVector = SVector<f64, 7>;

/// Magnitude above which any state or derivative component is treated as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e6;

const MAX_RK4_STEP: f64 = 0.01;
const INDUCTANCE_RCOND_MIN: f64 = 1e-10;
const STEADY_RCOND_MIN: f64 = 1e-13;

/// How the mutual-inductance coefficients are laid out in the inductance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// Flux equations placed term by term as written (non-symmetric).
    #[default]
    Literal,
    /// Reciprocal variant: the two negative rotor-row couplings are flipped so
    /// that the matrix equals its transpose.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineParams {
    /// Load winding resistance.
    pub r1: f64,
    /// Excitation winding resistance.
    pub r2: f64,
    /// Rotor resistance.
    pub r3: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub m_d12: f64,
    pub m_q12: f64,
    pub m_d1r: f64,
    pub m_q1r: f64,
    pub m_d2r: f64,
    pub m_q2r: f64,
    /// Synchronous electrical speed, per-unit.
    pub omega1: f64,
    /// Base electrical angular frequency in rad/s; scales the flux equations to seconds.
    pub omega_base: f64,
    /// Inertia constant H in seconds.
    pub inertia_h: f64,
    /// Volts per 1.0 p.u., used for reporting only.
    pub base_voltage_v: f64,
    pub base_torque: f64,
    pub coupling: Coupling,
}

impl Default for MachineParams {
    /// Illustrative per-unit machine. These constants are not measured data;
    /// they only give a stable sub-synchronous operating point.
    fn default() -> Self {
        Self {
            r1: 0.01,
            r2: 0.01,
            r3: 0.015,
            l1: 1.8,
            l2: 1.8,
            l3: 1.8,
            m_d12: 0.05,
            m_q12: 0.05,
            m_d1r: 1.6,
            m_q1r: 1.6,
            m_d2r: 1.6,
            m_q2r: 1.6,
            omega1: 1.0,
            omega_base: 2.0 * std::f64::consts::PI * 50.0,
            inertia_h: 3.0,
            base_voltage_v: 440.0,
            base_torque: 1.0,
            coupling: Coupling::Literal,
        }
    }
}

impl MachineParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("r1", self.r1),
            ("r2", self.r2),
            ("r3", self.r3),
            ("l1", self.l1),
            ("l2", self.l2),
            ("l3", self.l3),
            ("m_d12", self.m_d12),
            ("m_q12", self.m_q12),
            ("m_d1r", self.m_d1r),
            ("m_q1r", self.m_q1r),
            ("m_d2r", self.m_d2r),
            ("m_q2r", self.m_q2r),
            ("omega1", self.omega1),
            ("omega_base", self.omega_base),
            ("inertia_h", self.inertia_h),
            ("base_voltage_v", self.base_voltage_v),
            ("base_torque", self.base_torque),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        for (name, v) in [
            ("r1", self.r1),
            ("r2", self.r2),
            ("r3", self.r3),
            ("l1", self.l1),
            ("l2", self.l2),
            ("l3", self.l3),
            ("inertia_h", self.inertia_h),
            ("omega_base", self.omega_base),
            ("base_voltage_v", self.base_voltage_v),
        ] {
            if v <= 0.0 {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        build_inductance_matrix(self).map(|_| ())
    }
}

/// Six flux linkages and the rotor electrical speed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MachineState {
    pub psi_d1: f64,
    pub psi_q1: f64,
    pub psi_d2: f64,
    pub psi_q2: f64,
    pub psi_dr: f64,
    pub psi_qr: f64,
    pub omega: f64,
}

impl MachineState {
    pub fn fluxes(&self) -> FluxVector6 {
        Vector6::new(self.psi_d1, self.psi_q1, self.psi_d2, self.psi_q2, self.psi_dr, self.psi_qr)
    }

    pub fn from_fluxes(psi: &FluxVector6, omega: f64) -> Self {
        Self { psi_d1: psi[0], psi_q1: psi[1], psi_d2: psi[2], psi_q2: psi[3], psi_dr: psi[4], psi_qr: psi[5], omega }
    }

    pub fn to_vector(&self) -> StateVector {
        StateVector::from_column_slice(&[
            self.psi_d1,
            self.psi_q1,
            self.psi_d2,
            self.psi_q2,
            self.psi_dr,
            self.psi_qr,
            self.omega,
        ])
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self { psi_d1: x[0], psi_q1: x[1], psi_d2: x[2], psi_q2: x[3], psi_dr: x[4], psi_qr: x[5], omega: x[6] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineInputs {
    pub u_d2: f64,
    pub u_q2: f64,
    /// Mechanical torque, per-unit.
    pub tm: f64,
    /// Load resistance across winding 1, per-unit.
    pub r_load: f64,
    #[serde(default)]
    pub u_dr: f64,
    #[serde(default)]
    pub u_qr: f64,
}

impl MachineInputs {
    pub fn validate(&self) -> Result<()> {
        let all = [self.u_d2, self.u_q2, self.tm, self.r_load, self.u_dr, self.u_qr];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("machine inputs must be finite"));
        }
        if self.r_load <= 0.0 {
            return Err(Error::invalid(format!("r_load must be positive, got {}", self.r_load)));
        }
        Ok(())
    }

    /// Excitation magnitude `sqrt(u_d2^2 + u_q2^2)`.
    pub fn excitation_magnitude(&self) -> f64 {
        self.u_d2.hypot(self.u_q2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Currents6 {
    pub i_d1: f64,
    pub i_q1: f64,
    pub i_d2: f64,
    pub i_q2: f64,
    pub i_dr: f64,
    pub i_qr: f64,
}

impl Currents6 {
    pub fn from_vector(i: &Vector6<f64>) -> Self {
        Self { i_d1: i[0], i_q1: i[1], i_d2: i[2], i_q2: i[3], i_dr: i[4], i_qr: i[5] }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.i_d1, self.i_q1, self.i_d2, self.i_q2, self.i_dr, self.i_qr)
    }
}

/// Reciprocal condition number (smallest over largest singular value).
pub(crate) fn reciprocal_condition(m: &Matrix6<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 || !max.is_finite() {
        return 0.0;
    }
    sv.min() / max
}

/// Builds `L` with `psi = L * i`, ordering `(d1, q1, d2, q2, dr, qr)`.
///
/// Literal placement, row by row (columns d1 q1 d2 q2 dr qr):
///
/// ```text
/// psi_d1 = l1 i_d1 + m_d12 i_q2 + m_d1r i_dr
/// psi_q1 = l1 i_q1 + m_q12 i_d2 + m_q1r i_qr
/// psi_d2 = l2 i_d2 + m_q12 i_q1 + m_q2r i_qr
/// psi_q2 = l2 i_q2 + m_d12 i_d1 + m_d2r i_dr
/// psi_dr = l3 i_dr + m_d1r i_d1 - m_d2r i_q2
/// psi_qr = l3 i_qr + m_q1r i_q1 - m_q2r i_d2
/// ```
///
/// The compound rotor terms `(i_dr1 - i_qr2)` and `(i_qr1 +/- i_dr2)` of the
/// flux equations are read as the rotor d and q currents respectively,
/// so that zero mutual coupling leaves `diag(l1, l1, l2, l2, l3, l3)`.
/// [`Coupling::Symmetric`] flips the sign of the two negative rotor-row terms.
pub fn build_inductance_matrix(params: &MachineParams) -> Result<Matrix6<f64>> {
    let p = params;
    let s = match p.coupling {
        Coupling::Literal => -1.0,
        Coupling::Symmetric => 1.0,
    };
    #[rustfmt::skip]
    let l = Matrix6::new(
        p.l1,      0.0,         0.0,         p.m_d12,     p.m_d1r, 0.0,
        0.0,       p.l1,        p.m_q12,     0.0,         0.0,     p.m_q1r,
        0.0,       p.m_q12,     p.l2,        0.0,         0.0,     p.m_q2r,
        p.m_d12,   0.0,         0.0,         p.l2,        p.m_d2r, 0.0,
        p.m_d1r,   0.0,         0.0,         s * p.m_d2r, p.l3,    0.0,
        0.0,       p.m_q1r,     s * p.m_q2r, 0.0,         0.0,     p.l3,
    );
    let rcond = reciprocal_condition(&l);
    if !(rcond >= INDUCTANCE_RCOND_MIN) {
        return Err(Error::SingularInductanceMatrix { rcond });
    }
    Ok(l)
}

/// Solves `L * i = psi`.
pub fn currents_from_fluxes(lmat: &Matrix6<f64>, psi: &FluxVector6) -> Result<Currents6> {
    let i = lmat.lu().solve(psi).ok_or(Error::SingularInductanceMatrix { rcond: 0.0 })?;
    Ok(Currents6::from_vector(&i))
}

/// dq cross-product torque summed over both stator windings. Positive values
/// oppose rotor acceleration.
pub fn electromagnetic_torque(state: &MachineState, currents: &Currents6) -> f64 {
    (state.psi_d1 * currents.i_q1 - state.psi_q1 * currents.i_d1)
        + (state.psi_d2 * currents.i_q2 - state.psi_q2 * currents.i_d2)
}

/// Magnitude of the voltage across the resistive load on winding 1.
pub fn terminal_voltage(currents: &Currents6, r_load: f64) -> f64 {
    r_load * currents.i_d1.hypot(currents.i_q1)
}

fn check_bounded(x: &StateVector, what: &str) -> Result<()> {
    if let Some(k) = x.iter().position(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
        return Err(Error::DivergedState { time: f64::NAN, detail: format!("{what} component {k} = {}", x[k]) });
    }
    Ok(())
}

/// A validated machine with its inductance matrix and inverse precomputed.
#[derive(Debug, Clone)]
pub struct Plant {
    params: MachineParams,
    lmat: Matrix6<f64>,
    lmat_inv: Matrix6<f64>,
}

impl Plant {
    pub fn new(params: MachineParams) -> Result<Self> {
        params.validate()?;
        let lmat = build_inductance_matrix(&params)?;
        let lmat_inv = lmat.try_inverse().ok_or(Error::SingularInductanceMatrix { rcond: 0.0 })?;
        Ok(Self { params, lmat, lmat_inv })
    }

    pub fn params(&self) -> &MachineParams {
        &self.params
    }

    pub fn inductance_matrix(&self) -> &Matrix6<f64> {
        &self.lmat
    }

    pub fn currents(&self, state: &MachineState) -> Currents6 {
        Currents6::from_vector(&(self.lmat_inv * state.fluxes()))
    }

    pub fn terminal_voltage(&self, state: &MachineState, r_load: f64) -> f64 {
        terminal_voltage(&self.currents(state), r_load)
    }

    pub fn torque(&self, state: &MachineState) -> f64 {
        electromagnetic_torque(state, &self.currents(state))
    }

    pub fn derivative(&self, state: &MachineState, inputs: &MachineInputs) -> Result<StateVector> {
        let p = &self.params;
        let i = self.currents(state);
        // Resistive load on winding 1, currents flowing into the load.
        let u_d1 = -inputs.r_load * i.i_d1;
        let u_q1 = -inputs.r_load * i.i_q1;
        let slip = p.omega1 - state.omega;
        let wb = p.omega_base;

        let te = electromagnetic_torque(state, &i);
        let dx = StateVector::from_column_slice(&[
            wb * (u_d1 - p.r1 * i.i_d1 + p.omega1 * state.psi_q1),
            wb * (u_q1 - p.r1 * i.i_q1 - p.omega1 * state.psi_d1),
            wb * (inputs.u_d2 - p.r2 * i.i_d2 + p.omega1 * state.psi_q2),
            wb * (inputs.u_q2 - p.r2 * i.i_q2 - p.omega1 * state.psi_d2),
            wb * (inputs.u_dr - p.r3 * i.i_dr + slip * state.psi_qr),
            wb * (inputs.u_qr - p.r3 * i.i_qr - slip * state.psi_dr),
            (inputs.tm - te) / (2.0 * p.inertia_h),
        ]);
        check_bounded(&dx, "derivative")?;
        Ok(dx)
    }

    pub fn step_rk4(&self, state: &MachineState, inputs: &MachineInputs, h: f64) -> Result<MachineState> {
        if !(h > 0.0 && h <= MAX_RK4_STEP) {
            return Err(Error::invalid(format!("integration step must lie in (0, {MAX_RK4_STEP}] s, got {h}")));
        }
        let x = state.to_vector();
        check_bounded(&x, "state")?;
        let next = rk4_step(|x| self.derivative(&MachineState::from_vector(x), inputs), &x, h)?;
        check_bounded(&next, "state")?;
        Ok(MachineState::from_vector(&next))
    }

    /// Electrical steady state at a fixed rotor speed.
    ///
    /// Setting the flux derivatives to zero gives the linear system
    /// `(R_eff - W(omega) L) i = u`, where `R_eff` folds the load resistance
    /// into winding 1 and `W` holds the speed-voltage rotation terms.
    pub fn steady_state(&self, inputs: &MachineInputs, omega_fixed: f64) -> Result<MachineState> {
        inputs.validate()?;
        let p = &self.params;
        let slip = p.omega1 - omega_fixed;
        let r_eff =
            Matrix6::from_diagonal(&Vector6::new(p.r1 + inputs.r_load, p.r1 + inputs.r_load, p.r2, p.r2, p.r3, p.r3));
        let mut w = Matrix6::zeros();
        w[(0, 1)] = p.omega1;
        w[(1, 0)] = -p.omega1;
        w[(2, 3)] = p.omega1;
        w[(3, 2)] = -p.omega1;
        w[(4, 5)] = slip;
        w[(5, 4)] = -slip;
        let a = r_eff - w * self.lmat;
        if !(reciprocal_condition(&a) >= STEADY_RCOND_MIN) {
            return Err(Error::SingularSystem);
        }
        let u = Vector6::new(0.0, 0.0, inputs.u_d2, inputs.u_q2, inputs.u_dr, inputs.u_qr);
        let i = a.lu().solve(&u).ok_or(Error::SingularSystem)?;
        let psi = self.lmat * i;
        Ok(MachineState::from_fluxes(&psi, omega_fixed))
    }

    /// Rotor speed at which the steady electrical torque balances `inputs.tm`
    /// on a branch where torque rises with speed, nearest to synchronous speed.
    pub fn equilibrium_speed(&self, inputs: &MachineInputs) -> Result<f64> {
        let w1 = self.params.omega1;
        let excess = |w: f64| -> Result<f64> {
            let s = self.steady_state(inputs, w)?;
            Ok(self.torque(&s) - inputs.tm)
        };
        let span = 0.5 * w1.abs().max(1.0);
        let steps = 2000;
        let grid = |k: usize| w1 - span + 2.0 * span * k as f64 / steps as f64;

        let mut best: Option<(f64, f64)> = None;
        let mut prev = (grid(0), excess(grid(0))?);
        for k in 1..=steps {
            let w = grid(k);
            let f = excess(w)?;
            if prev.1 < 0.0 && f >= 0.0 {
                let mid = 0.5 * (prev.0 + w);
                let closer = best.is_none_or(|(lo, hi)| (mid - w1).abs() < (0.5 * (lo + hi) - w1).abs());
                if closer {
                    best = Some((prev.0, w));
                }
            }
            prev = (w, f);
        }
        let (mut lo, mut hi) =
            best.ok_or_else(|| Error::invalid(format!("no stable equilibrium speed for torque {}", inputs.tm)))?;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if excess(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Full electromechanical equilibrium: equilibrium speed plus the electrical
    /// steady state at that speed.
    pub fn operating_point(&self, inputs: &MachineInputs) -> Result<MachineState> {
        let w = self.equilibrium_speed(inputs)?;
        self.steady_state(inputs, w)
    }
}

pub fn state_derivative(params: &MachineParams, state: &MachineState, inputs: &MachineInputs) -> Result<StateVector> {
    Plant::new(*params)?.derivative(state, inputs)
}

pub fn step_rk4(params: &MachineParams, state: &MachineState, inputs: &MachineInputs, h: f64) -> Result<MachineState> {
    Plant::new(*params)?.step_rk4(state, inputs, h)
}

pub fn steady_state(params: &MachineParams, inputs: &MachineInputs, omega_fixed: f64) -> Result<MachineState> {
    Plant::new(*params)?.steady_state(inputs, omega_fixed)
}
