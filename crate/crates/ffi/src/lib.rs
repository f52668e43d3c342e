//! C ABI over the `dwig` simulator.
//!
//! Every entry point returns a [`DwigStatus`]. On failure a description is kept
//! per thread and can be read with [`dwig_last_error`]. Objects are opaque
//! handles created by `*_new`/`*_load`/`*_run` and released by the matching
//! `*_free`, which accepts null.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dwig::config::{load_scenario, parse_machine};
use dwig::control::{mv_control, ControlHistory, MvConfig};
use dwig::experiment::{compute_metrics, run_scenario, ScenarioSpec, TimeSeriesLog};
use dwig::io::write_log_csv;
use dwig::machine::{MachineInputs, MachineParams, MachineState, Plant};
use dwig::sysid::{ArxModel, RlsState};
use dwig::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DwigStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Diverged = 4,
    Singular = 5,
    Unrealizable = 6,
    Io = 7,
    Panic = 8,
}

/// Plant inputs, per-unit.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DwigInputs {
    pub u_d2: f64,
    pub u_q2: f64,
    pub tm: f64,
    pub r_load: f64,
    pub u_dr: f64,
    pub u_qr: f64,
}

/// Six flux linkages and rotor speed, per-unit.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DwigState {
    pub psi_d1: f64,
    pub psi_q1: f64,
    pub psi_d2: f64,
    pub psi_q2: f64,
    pub psi_dr: f64,
    pub psi_qr: f64,
    pub omega: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DwigMvConfig {
    pub rho: f64,
    pub w: f64,
    pub u_star: f64,
    pub u_min: f64,
    pub u_max: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DwigControlOutput {
    pub applied: f64,
    pub unclamped: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DwigMetrics {
    pub overshoot: f64,
    pub settling_time: f64,
    /// 1 when the output stays inside the band over the final window.
    pub settled: i32,
    pub control_spike: f64,
    pub steady_control: f64,
    pub final_value: f64,
}

/// Fixed columns of one log row; estimates are read with [`dwig_log_theta`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DwigLogRow {
    pub time: f64,
    pub terminal_pu: f64,
    pub terminal_v: f64,
    pub measured_v: f64,
    pub u_applied_v: f64,
    pub u_unclamped_v: f64,
    pub speed_pu: f64,
    pub torque_pu: f64,
    pub load_pu: f64,
    pub reference_v: f64,
    pub prediction_error_v: f64,
    pub realizable: i32,
}

pub struct DwigPlant(Plant);
pub struct DwigRls(RlsState);
pub struct DwigScenario(ScenarioSpec);
pub struct DwigLog(TimeSeriesLog);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DwigStatus {
    match e {
        Error::SingularInductanceMatrix { .. } | Error::SingularSystem => DwigStatus::Singular,
        Error::DivergedState { .. } | Error::NonFiniteUpdate => DwigStatus::Diverged,
        Error::DimensionMismatch { .. } | Error::InvalidParameter(_) => DwigStatus::InvalidArgument,
        Error::UnrealizableLaw { .. } => DwigStatus::Unrealizable,
        Error::Config(_) => DwigStatus::Config,
        Error::Io(_) => DwigStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status and the last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DwigStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DwigStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            DwigStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            DwigStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            DwigStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))
}

fn to_inputs(u: &DwigInputs) -> MachineInputs {
    MachineInputs { u_d2: u.u_d2, u_q2: u.u_q2, tm: u.tm, r_load: u.r_load, u_dr: u.u_dr, u_qr: u.u_qr }
}

fn to_state(s: &DwigState) -> MachineState {
    MachineState {
        psi_d1: s.psi_d1,
        psi_q1: s.psi_q1,
        psi_d2: s.psi_d2,
        psi_q2: s.psi_q2,
        psi_dr: s.psi_dr,
        psi_qr: s.psi_qr,
        omega: s.omega,
    }
}

fn from_state(s: &MachineState) -> DwigState {
    DwigState {
        psi_d1: s.psi_d1,
        psi_q1: s.psi_q1,
        psi_d2: s.psi_d2,
        psi_q2: s.psi_q2,
        psi_dr: s.psi_dr,
        psi_qr: s.psi_qr,
        omega: s.omega,
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn dwig_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dwig_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- plant ----

/// Plant with the built-in default parameters.
#[no_mangle]
pub unsafe extern "C" fn dwig_plant_new_default(out: *mut *mut DwigPlant) -> DwigStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(DwigPlant(Plant::new(MachineParams::default())?)));
        Ok(())
    })
}

/// Plant from machine parameters in TOML text.
#[no_mangle]
pub unsafe extern "C" fn dwig_plant_from_toml(toml: *const c_char, out: *mut *mut DwigPlant) -> DwigStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let params = parse_machine(string(toml, "toml")?)?;
        *out = Box::into_raw(Box::new(DwigPlant(Plant::new(params)?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dwig_plant_free(plant: *mut DwigPlant) {
    if !plant.is_null() {
        drop(Box::from_raw(plant));
    }
}

/// Electromechanical equilibrium for the given inputs.
#[no_mangle]
pub unsafe extern "C" fn dwig_plant_operating_point(
    plant: *const DwigPlant,
    inputs: *const DwigInputs,
    out: *mut DwigState,
) -> DwigStatus {
    guard(|| {
        let p = deref(plant, "plant")?;
        let u = to_inputs(deref(inputs, "inputs")?);
        *deref_mut(out, "out")? = from_state(&p.0.operating_point(&u)?);
        Ok(())
    })
}

/// Electrical steady state at a fixed rotor speed.
#[no_mangle]
pub unsafe extern "C" fn dwig_plant_steady_state(
    plant: *const DwigPlant,
    inputs: *const DwigInputs,
    omega: f64,
    out: *mut DwigState,
) -> DwigStatus {
    guard(|| {
        let p = deref(plant, "plant")?;
        let u = to_inputs(deref(inputs, "inputs")?);
        *deref_mut(out, "out")? = from_state(&p.0.steady_state(&u, omega)?);
        Ok(())
    })
}

/// Writes the seven state derivatives to `out`.
#[no_mangle]
pub unsafe extern "C" fn dwig_plant_derivative(
    plant: *const DwigPlant,
    state: *const DwigState,
    inputs: *const DwigInputs,
    out: *mut f64,
) -> DwigStatus {
    guard(|| {
        let p = deref(plant, "plant")?;
        let s = to_state(deref(state, "state")?);
        let u = to_inputs(deref(inputs, "inputs")?);
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let dx = p.0.derivative(&s, &u)?;
        std::slice::from_raw_parts_mut(out, 7).copy_from_slice(dx.as_slice());
        Ok(())
    })
}

/// One fourth-order Runge-Kutta step of length `h` seconds; `state` is updated in place.
#[no_mangle]
pub unsafe extern "C" fn dwig_plant_step(
    plant: *const DwigPlant,
    state: *mut DwigState,
    inputs: *const DwigInputs,
    h: f64,
) -> DwigStatus {
    guard(|| {
        let p = deref(plant, "plant")?;
        let u = to_inputs(deref(inputs, "inputs")?);
        let s = deref_mut(state, "state")?;
        *s = from_state(&p.0.step_rk4(&to_state(s), &u, h)?);
        Ok(())
    })
}

/// Terminal voltage magnitude, per-unit.
#[no_mangle]
pub unsafe extern "C" fn dwig_plant_terminal_voltage(
    plant: *const DwigPlant,
    state: *const DwigState,
    r_load: f64,
    out: *mut f64,
) -> DwigStatus {
    guard(|| {
        let p = deref(plant, "plant")?;
        let s = to_state(deref(state, "state")?);
        *deref_mut(out, "out")? = p.0.terminal_voltage(&s, r_load);
        Ok(())
    })
}

// ---- estimator ----

#[no_mangle]
pub unsafe extern "C" fn dwig_rls_new(order: usize, lambda: f64, p0: f64, out: *mut *mut DwigRls) -> DwigStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(DwigRls(RlsState::new(order, lambda, p0)?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dwig_rls_free(rls: *mut DwigRls) {
    if !rls.is_null() {
        drop(Box::from_raw(rls));
    }
}

/// Number of estimated parameters, `2 * order - 1`.
#[no_mangle]
pub unsafe extern "C" fn dwig_rls_num_params(rls: *const DwigRls) -> usize {
    rls.as_ref().map_or(0, |r| r.0.theta().len())
}

/// One update with regressor `phi` (`len` entries) and measurement `y`.
/// The a-priori prediction error is written to `error` when non-null.
#[no_mangle]
pub unsafe extern "C" fn dwig_rls_update(
    rls: *mut DwigRls,
    phi: *const f64,
    len: usize,
    y: f64,
    error: *mut f64,
) -> DwigStatus {
    guard(|| {
        let r = deref_mut(rls, "rls")?;
        let phi = nalgebra::DVector::from_column_slice(slice(phi, len, "phi")?);
        let e = r.0.update(&phi, y)?;
        if let Some(out) = error.as_mut() {
            *out = e;
        }
        Ok(())
    })
}

/// Copies the parameter estimates, `(a1.., b0..)`, into `out` of length `len`.
#[no_mangle]
pub unsafe extern "C" fn dwig_rls_theta(rls: *const DwigRls, out: *mut f64, len: usize) -> DwigStatus {
    guard(|| {
        let r = deref(rls, "rls")?;
        let theta = r.0.theta();
        if len != theta.len() {
            return Err(Fail::Lib(Error::DimensionMismatch { expected: theta.len(), got: len }));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(theta.as_slice());
        Ok(())
    })
}

/// Smallest eigenvalue of the covariance matrix.
#[no_mangle]
pub unsafe extern "C" fn dwig_rls_min_eigenvalue(rls: *const DwigRls, out: *mut f64) -> DwigStatus {
    guard(|| {
        let r = deref(rls, "rls")?;
        *deref_mut(out, "out")? = r.0.min_eigenvalue();
        Ok(())
    })
}

// ---- controller ----

/// Penalized minimum-variance control for a model of order `order`.
///
/// `a` holds `order - 1` coefficients, `b` holds `order`. `hist_y` holds the
/// outputs `y(t) .. y(t-order+2)` and `hist_u` the controls
/// `u(t-1) .. u(t-order+1)`, most recent first, `order - 1` each.
#[no_mangle]
pub unsafe extern "C" fn dwig_mv_control(
    config: *const DwigMvConfig,
    order: usize,
    a: *const f64,
    b: *const f64,
    hist_y: *const f64,
    hist_u: *const f64,
    out: *mut DwigControlOutput,
) -> DwigStatus {
    guard(|| {
        let c = deref(config, "config")?;
        if order < 1 {
            return Err(Fail::Arg("order must be at least 1".into()));
        }
        let model = ArxModel::new(slice(a, order - 1, "a")?.to_vec(), slice(b, order, "b")?.to_vec())?;
        let history = ControlHistory {
            y: slice(hist_y, order - 1, "hist_y")?.to_vec(),
            u: slice(hist_u, order - 1, "hist_u")?.to_vec(),
        };
        let cfg =
            MvConfig { rho: c.rho, w: c.w, u_star: c.u_star, u_min: c.u_min, u_max: c.u_max, dither_variance: 0.0 };
        cfg.validate()?;
        let o = mv_control(&cfg, &model, &history)?;
        *deref_mut(out, "out")? = DwigControlOutput { applied: o.applied, unclamped: o.unclamped };
        Ok(())
    })
}

// ---- scenarios ----

/// Loads a scenario file; a relative machine path resolves against its directory.
#[no_mangle]
pub unsafe extern "C" fn dwig_scenario_load(path: *const c_char, out: *mut *mut DwigScenario) -> DwigStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let spec = load_scenario(Path::new(string(path, "path")?))?;
        *out = Box::into_raw(Box::new(DwigScenario(spec)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dwig_scenario_free(scenario: *mut DwigScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Overrides the seed and the `(lambda, rho)` tuning pair.
#[no_mangle]
pub unsafe extern "C" fn dwig_scenario_set_tuning(
    scenario: *mut DwigScenario,
    seed: u64,
    lambda: f64,
    rho: f64,
) -> DwigStatus {
    guard(|| {
        let s = deref_mut(scenario, "scenario")?;
        let mut next = s.0.with_tuning(lambda, rho);
        next.seed = seed;
        next.validate()?;
        s.0 = next;
        Ok(())
    })
}

/// Runs the scenario in its configured mode.
#[no_mangle]
pub unsafe extern "C" fn dwig_scenario_run(scenario: *const DwigScenario, out: *mut *mut DwigLog) -> DwigStatus {
    guard(|| {
        let s = deref(scenario, "scenario")?;
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(DwigLog(run_scenario(&s.0)?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dwig_log_free(log: *mut DwigLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

#[no_mangle]
pub unsafe extern "C" fn dwig_log_num_rows(log: *const DwigLog) -> usize {
    log.as_ref().map_or(0, |l| l.0.rows.len())
}

/// Number of parameter estimates per row (0 for open-loop logs).
#[no_mangle]
pub unsafe extern "C" fn dwig_log_num_theta(log: *const DwigLog) -> usize {
    log.as_ref().map_or(0, |l| l.0.theta_names.len())
}

#[no_mangle]
pub unsafe extern "C" fn dwig_log_row(log: *const DwigLog, index: usize, out: *mut DwigLogRow) -> DwigStatus {
    guard(|| {
        let l = deref(log, "log")?;
        let r = l.0.rows.get(index).ok_or_else(|| Fail::Arg(format!("row {index} out of range")))?;
        *deref_mut(out, "out")? = DwigLogRow {
            time: r.time,
            terminal_pu: r.terminal_pu,
            terminal_v: r.terminal_v,
            measured_v: r.measured_v,
            u_applied_v: r.u_applied_v,
            u_unclamped_v: r.u_unclamped_v,
            speed_pu: r.speed_pu,
            torque_pu: r.torque_pu,
            load_pu: r.load_pu,
            reference_v: r.reference_v,
            prediction_error_v: r.prediction_error_v,
            realizable: r.realizable as i32,
        };
        Ok(())
    })
}

/// Copies the estimates logged at row `index` into `out` of length `len`.
#[no_mangle]
pub unsafe extern "C" fn dwig_log_theta(log: *const DwigLog, index: usize, out: *mut f64, len: usize) -> DwigStatus {
    guard(|| {
        let l = deref(log, "log")?;
        let r = l.0.rows.get(index).ok_or_else(|| Fail::Arg(format!("row {index} out of range")))?;
        if len != r.theta.len() {
            return Err(Fail::Lib(Error::DimensionMismatch { expected: r.theta.len(), got: len }));
        }
        if len > 0 {
            if out.is_null() {
                return Err(Fail::Null("out"));
            }
            std::slice::from_raw_parts_mut(out, len).copy_from_slice(&r.theta);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dwig_log_write_csv(log: *const DwigLog, path: *const c_char) -> DwigStatus {
    guard(|| {
        let l = deref(log, "log")?;
        write_log_csv(&l.0, Path::new(string(path, "path")?))?;
        Ok(())
    })
}

/// Performance metrics after `event_time` with settling band `band_fraction`.
#[no_mangle]
pub unsafe extern "C" fn dwig_log_metrics(
    log: *const DwigLog,
    band_fraction: f64,
    event_time: f64,
    out: *mut DwigMetrics,
) -> DwigStatus {
    guard(|| {
        let l = deref(log, "log")?;
        let m = compute_metrics(&l.0, band_fraction, event_time)?;
        *deref_mut(out, "out")? = DwigMetrics {
            overshoot: m.overshoot,
            settling_time: m.settling_time,
            settled: m.settled as i32,
            control_spike: m.control_spike,
            steady_control: m.steady_control,
            final_value: m.final_value,
        };
        Ok(())
    })
}
