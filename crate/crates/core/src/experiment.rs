//! Open- and closed-loop experiment engine, performance metrics and tuning sweeps.
//!
//! A scenario couples the nonlinear [`Plant`] with the RLS estimator and the
//! minimum-variance controller. The plant is integrated with RK4 at step `h`;
//! the controller samples every `ts` and holds the excitation in between.
//! The adaptive loop works in volts: the measured terminal voltage and the
//! excitation command are the per-unit values times `base_voltage_v`, and the
//! dither variance is expressed in V^2.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{mv_control, ControlHistory, DitherSource, MvConfig, UStarMode, UStarTracker};
use crate::error::{Error, Result};
use crate::machine::{MachineInputs, MachineParams, MachineState, Plant};
use crate::sysid::{RegressorWindow, RlsState, DEFAULT_ORDER};

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OpenLoop,
    ClosedLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    MechanicalTorque,
    LoadResistance,
    ExcitationVoltage,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Multiply the current value by `1 + value`.
    RelativeStep,
    /// Replace the current value (per-unit).
    AbsoluteSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationEvent {
    pub time: f64,
    pub target: Target,
    pub kind: EventKind,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSettings {
    pub order: usize,
    /// Initial covariance `p0 * I`.
    pub p0: f64,
    /// Estimator updates before the control law is engaged; `u*` is held until then.
    pub warmup: u64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self { order: DEFAULT_ORDER, p0: 1e3, warmup: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSettings {
    /// Reference terminal voltage, per-unit. Defaults to the operating point.
    pub reference: Option<f64>,
    /// Steady-state excitation, per-unit. Defaults to the nominal excitation.
    pub u_star: Option<f64>,
    pub u_star_mode: UStarMode,
    pub u_star_time_constant: f64,
    /// Excitation limits, per-unit. Default to +/- 3x nominal excitation.
    pub u_min: Option<f64>,
    pub u_max: Option<f64>,
    /// Variance of the additive measurement dither, V^2.
    pub dither_variance: f64,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            reference: None,
            u_star: None,
            u_star_mode: UStarMode::Constant,
            u_star_time_constant: 10.0,
            u_min: None,
            u_max: None,
            dither_variance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub lambdas: Vec<f64>,
    pub rhos: Vec<f64>,
    /// Explicit `(lambda, rho)` cells; take precedence over the Cartesian grid.
    pub pairs: Vec<[f64; 2]>,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<(f64, f64)> {
        if !self.pairs.is_empty() {
            return self.pairs.iter().map(|p| (p[0], p[1])).collect();
        }
        self.lambdas.iter().flat_map(|&l| self.rhos.iter().map(move |&r| (l, r))).collect()
    }
}

fn default_ts() -> f64 {
    0.01
}
fn default_h() -> f64 {
    0.001
}
fn default_presim() -> f64 {
    2.0
}
fn default_band() -> f64 {
    0.01
}
fn default_lambda() -> f64 {
    0.995
}
fn default_rho() -> f64 {
    0.0725
}

/// Declarative experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    pub mode: Mode,
    /// Seconds.
    pub duration: f64,
    #[serde(default = "default_ts")]
    pub ts: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub seed: u64,
    /// Discarded settling run at nominal inputs before t = 0, seconds.
    #[serde(default = "default_presim")]
    pub presim: f64,
    /// Settling band as a fraction of the final value.
    #[serde(default = "default_band")]
    pub settle_band: f64,
    /// Nominal plant inputs.
    pub operating_point: MachineInputs,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub controller: ControllerSettings,
    #[serde(default)]
    pub events: Vec<PerturbationEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
    /// Resolved machine parameters (loaded from the file named by `machine`).
    #[serde(skip)]
    pub machine: MachineParams,
}

fn grid_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let r = num / den;
    let n = r.round();
    if !(n >= 1.0) || (r - n).abs() > GRID_TOL * n.max(1.0) {
        return Err(Error::Config(format!("{what}: {num} is not an integer multiple of {den}")));
    }
    Ok(n as usize)
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.machine.validate()?;
        self.operating_point.validate()?;
        for (name, v) in [("duration", self.duration), ("ts", self.ts), ("h", self.h)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.h > 0.01 {
            return Err(Error::Config(format!("h must not exceed 0.01 s, got {}", self.h)));
        }
        grid_ratio(self.ts, self.h, "ts / h")?;
        grid_ratio(self.duration, self.ts, "duration / ts")?;
        if !(self.presim >= 0.0 && self.presim.is_finite()) {
            return Err(Error::Config("presim must be non-negative".into()));
        }
        if !(self.settle_band > 0.0 && self.settle_band < 1.0) {
            return Err(Error::Config(format!("settle_band must lie in (0, 1), got {}", self.settle_band)));
        }
        let mut last = 0.0;
        for ev in &self.events {
            if !(ev.time >= last && ev.time <= self.duration) {
                return Err(Error::Config(format!(
                    "events must be sorted by time within [0, {}], got t = {}",
                    self.duration, ev.time
                )));
            }
            last = ev.time;
            if !ev.value.is_finite() {
                return Err(Error::Config("event value must be finite".into()));
            }
            if ev.kind == EventKind::RelativeStep && ev.value <= -1.0 {
                return Err(Error::Config(format!("relative step must exceed -1, got {}", ev.value)));
            }
            if self.mode == Mode::ClosedLoop && ev.target == Target::ExcitationVoltage {
                return Err(Error::Config("excitation events are only valid in open loop".into()));
            }
        }
        if self.mode == Mode::ClosedLoop {
            RlsState::new(self.estimator.order, self.lambda, self.estimator.p0)?;
            if self.operating_point.excitation_magnitude() == 0.0 {
                return Err(Error::Config("closed loop needs a non-zero nominal excitation".into()));
            }
            if !(self.controller.u_star_time_constant > 0.0) {
                return Err(Error::Config("u_star_time_constant must be positive".into()));
            }
            self.mv_config_volts(0.0)?.validate()?;
        }
        Ok(())
    }

    pub fn substeps(&self) -> Result<usize> {
        grid_ratio(self.ts, self.h, "ts / h")
    }

    pub fn samples(&self) -> Result<usize> {
        grid_ratio(self.duration, self.ts, "duration / ts")
    }

    /// Copy with a different `(lambda, rho)` tuning pair.
    pub fn with_tuning(&self, lambda: f64, rho: f64) -> Self {
        Self { lambda, rho, ..self.clone() }
    }

    /// Time of the last scheduled event, or 0.
    pub fn last_event_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }

    /// Controller settings in volts, with the reference taken from
    /// `operating_v` unless configured explicitly.
    fn mv_config_volts(&self, operating_v: f64) -> Result<MvConfig> {
        let base = self.machine.base_voltage_v;
        let c = &self.controller;
        let nominal = self.operating_point.excitation_magnitude();
        let u_star = c.u_star.unwrap_or(nominal) * base;
        let cfg = MvConfig {
            rho: self.rho,
            w: c.reference.map_or(operating_v, |r| r * base),
            u_star,
            u_min: c.u_min.unwrap_or(-3.0 * nominal) * base,
            u_max: c.u_max.unwrap_or(3.0 * nominal) * base,
            dither_variance: c.dither_variance,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One logged control sample. Voltages in volts unless suffixed `_pu`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub time: f64,
    pub terminal_pu: f64,
    pub terminal_v: f64,
    /// Terminal voltage plus dither, as seen by the estimator and controller.
    pub measured_v: f64,
    pub u_applied_v: f64,
    pub u_unclamped_v: f64,
    pub speed_pu: f64,
    pub torque_pu: f64,
    pub load_pu: f64,
    pub reference_v: f64,
    pub prediction_error_v: f64,
    pub realizable: bool,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeriesLog {
    /// Names of the parameter-estimate columns, `a1.. b0..`; empty in open loop.
    pub theta_names: Vec<String>,
    pub rows: Vec<LogRow>,
}

impl TimeSeriesLog {
    pub fn column<F: Fn(&LogRow) -> f64>(&self, f: F) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn ts(&self) -> Option<f64> {
        (self.rows.len() >= 2).then(|| self.rows[1].time - self.rows[0].time)
    }
}

pub fn theta_names(order: usize) -> Vec<String> {
    (1..order).map(|i| format!("a{i}")).chain((0..order).map(|j| format!("b{j}"))).collect()
}

struct AdaptiveLoop {
    rls: RlsState,
    window: RegressorWindow,
    history: ControlHistory,
    dither: DitherSource,
    u_star: UStarTracker,
    mv: MvConfig,
    warmup: u64,
}

/// Stepwise scenario runner. [`run_open_loop`] and [`run_closed_loop`] drive
/// it to completion; tests and bindings can also step it and inspect the
/// estimator between samples.
pub struct Simulation {
    spec: ScenarioSpec,
    plant: Plant,
    state: MachineState,
    inputs: MachineInputs,
    direction: (f64, f64),
    base_v: f64,
    substeps: usize,
    samples: usize,
    events: Vec<(usize, PerturbationEvent)>,
    next_event: usize,
    k: usize,
    excitation_v: f64,
    reference_v: f64,
    adaptive: Option<AdaptiveLoop>,
}

impl Simulation {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let plant = Plant::new(spec.machine)?;
        let inputs = spec.operating_point;
        let mut state = plant.operating_point(&inputs)?;
        let presim_steps = (spec.presim / spec.h).round() as usize;
        for s in 0..presim_steps {
            state = plant.step_rk4(&state, &inputs, spec.h).map_err(|e| e.at_time(-spec.presim + s as f64 * spec.h))?;
        }

        let base_v = spec.machine.base_voltage_v;
        let mag = inputs.excitation_magnitude();
        let direction = if mag > 0.0 { (inputs.u_d2 / mag, inputs.u_q2 / mag) } else { (0.0, 1.0) };
        let operating_v = plant.terminal_voltage(&state, inputs.r_load) * base_v;

        let adaptive = match spec.mode {
            Mode::OpenLoop => None,
            Mode::ClosedLoop => {
                let mv = spec.mv_config_volts(operating_v)?;
                let order = spec.estimator.order;
                let u0 = mag * base_v;
                Some(AdaptiveLoop {
                    rls: RlsState::new(order, spec.lambda, spec.estimator.p0)?,
                    // The plant has rested at the operating point before t = 0.
                    window: RegressorWindow::filled(order, operating_v, u0),
                    history: ControlHistory::filled(order, operating_v, u0),
                    dither: DitherSource::new(spec.seed, mv.dither_variance),
                    u_star: UStarTracker::new(
                        spec.controller.u_star_mode,
                        mv.u_star,
                        spec.controller.u_star_time_constant,
                    ),
                    mv,
                    warmup: spec.estimator.warmup,
                })
            }
        };
        let reference_v = adaptive.as_ref().map_or(operating_v, |a| a.mv.w);

        let events = spec.events.iter().map(|e| ((e.time / spec.h).round() as usize, *e)).collect();
        Ok(Self {
            spec: spec.clone(),
            plant,
            state,
            inputs,
            direction,
            base_v,
            substeps: spec.substeps()?,
            samples: spec.samples()?,
            events,
            next_event: 0,
            k: 0,
            excitation_v: mag * base_v,
            reference_v,
            adaptive,
        })
    }

    pub fn state(&self) -> &MachineState {
        &self.state
    }

    pub fn inputs(&self) -> &MachineInputs {
        &self.inputs
    }

    pub fn estimator(&self) -> Option<&RlsState> {
        self.adaptive.as_ref().map(|a| &a.rls)
    }

    pub fn is_finished(&self) -> bool {
        self.k > self.samples
    }

    fn apply_due_events(&mut self, substep_index: usize) {
        while let Some(&(idx, ev)) = self.events.get(self.next_event) {
            if idx > substep_index {
                break;
            }
            self.next_event += 1;
            let apply = |current: f64| match ev.kind {
                EventKind::RelativeStep => current * (1.0 + ev.value),
                EventKind::AbsoluteSet => ev.value,
            };
            match ev.target {
                Target::MechanicalTorque => self.inputs.tm = apply(self.inputs.tm),
                Target::LoadResistance => self.inputs.r_load = apply(self.inputs.r_load),
                Target::ExcitationVoltage => {
                    let mag = apply(self.inputs.excitation_magnitude());
                    self.set_excitation(mag * self.base_v);
                }
                Target::Reference => {
                    let w = apply(self.reference_v / self.base_v) * self.base_v;
                    self.reference_v = w;
                    if let Some(a) = self.adaptive.as_mut() {
                        a.mv.w = w;
                    }
                }
            }
            log::debug!("t = {:.4} s: applied {:?}", idx as f64 * self.spec.h, ev);
        }
    }

    fn set_excitation(&mut self, volts: f64) {
        self.excitation_v = volts;
        let pu = volts / self.base_v;
        self.inputs.u_d2 = self.direction.0 * pu;
        self.inputs.u_q2 = self.direction.1 * pu;
    }

    /// Advance one control sample. Returns `None` once all `duration / ts + 1`
    /// rows have been produced.
    pub fn step(&mut self) -> Result<Option<LogRow>> {
        if self.is_finished() {
            return Ok(None);
        }
        let k = self.k;
        let t = k as f64 * self.spec.ts;
        self.apply_due_events(k * self.substeps);

        let terminal_pu = self.plant.terminal_voltage(&self.state, self.inputs.r_load);
        let terminal_v = terminal_pu * self.base_v;

        let (measured_v, unclamped, prediction_error_v, realizable, theta) = match self.adaptive.as_mut() {
            None => (terminal_v, self.excitation_v, 0.0, true, Vec::new()),
            Some(a) => {
                let y = terminal_v + a.dither.sample();
                let err = a.rls.update(&a.window.regressor(), y).map_err(|e| e.at_time(t))?;
                a.window.push_output(y);
                a.history.record_output(y);
                a.mv.u_star = a.u_star.value();

                let (out, realizable) = if a.rls.updates() <= a.warmup {
                    (a.mv.u_star, true)
                } else {
                    match mv_control(&a.mv, &a.rls.model(), &a.history) {
                        Ok(o) => (o.unclamped, true),
                        Err(Error::UnrealizableLaw { denominator }) => {
                            log::debug!(
                                "t = {t:.3} s: control law unrealizable (|b0 + rho| = {denominator:e}), holding u*"
                            );
                            (a.mv.u_star, false)
                        }
                        Err(e) => return Err(e),
                    }
                };
                let applied = out.clamp(a.mv.u_min, a.mv.u_max);
                a.history.record_input(applied);
                a.window.push_input(applied);
                a.u_star.observe(applied, self.spec.ts);
                let theta = a.rls.theta().as_slice().to_vec();
                self.set_excitation(applied);
                (y, out, err, realizable, theta)
            }
        };

        let row = LogRow {
            time: t,
            terminal_pu,
            terminal_v,
            measured_v,
            u_applied_v: self.excitation_v,
            u_unclamped_v: unclamped,
            speed_pu: self.state.omega,
            torque_pu: self.inputs.tm,
            load_pu: self.inputs.r_load,
            reference_v: self.reference_v,
            prediction_error_v,
            realizable,
            theta,
        };

        if k < self.samples {
            for s in 0..self.substeps {
                let idx = k * self.substeps + s;
                if s > 0 {
                    self.apply_due_events(idx);
                }
                self.state = self
                    .plant
                    .step_rk4(&self.state, &self.inputs, self.spec.h)
                    .map_err(|e| e.at_time(idx as f64 * self.spec.h))?;
            }
        }
        self.k += 1;
        Ok(Some(row))
    }

    pub fn run(mut self) -> Result<TimeSeriesLog> {
        let theta_names = match self.spec.mode {
            Mode::OpenLoop => Vec::new(),
            Mode::ClosedLoop => theta_names(self.spec.estimator.order),
        };
        let mut rows = Vec::with_capacity(self.samples + 1);
        while let Some(row) = self.step()? {
            rows.push(row);
        }
        Ok(TimeSeriesLog { theta_names, rows })
    }
}

/// Plant alone, excitation held at nominal except for scheduled events.
pub fn run_open_loop(spec: &ScenarioSpec) -> Result<TimeSeriesLog> {
    if spec.mode != Mode::OpenLoop {
        return Err(Error::Config("run_open_loop needs mode = open_loop".into()));
    }
    Simulation::new(spec)?.run()
}

/// Plant with the RLS estimator and minimum-variance controller in the loop.
pub fn run_closed_loop(spec: &ScenarioSpec) -> Result<TimeSeriesLog> {
    if spec.mode != Mode::ClosedLoop {
        return Err(Error::Config("run_closed_loop needs mode = closed_loop".into()));
    }
    Simulation::new(spec)?.run()
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<TimeSeriesLog> {
    Simulation::new(spec)?.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerfMetrics {
    /// Largest `|y - y_final|` after the event, volts.
    pub overshoot: f64,
    /// Seconds from the event until the output stays inside the band.
    pub settling_time: f64,
    /// False when the output is still outside the band over the final window.
    pub settled: bool,
    /// Largest `|u_unclamped|` after the event, volts.
    pub control_spike: f64,
    /// Mean applied control over the final window, volts.
    pub steady_control: f64,
    /// Mean terminal voltage over the final window, volts.
    pub final_value: f64,
}

/// Performance figures of the terminal voltage after `event_time`.
///
/// The final value is the mean over the last tenth of the post-event
/// samples (at least one sample).
pub fn compute_metrics(log: &TimeSeriesLog, band_fraction: f64, event_time: f64) -> Result<PerfMetrics> {
    if log.rows.is_empty() {
        return Err(Error::invalid("empty log"));
    }
    if !(band_fraction > 0.0) {
        return Err(Error::invalid("band fraction must be positive"));
    }
    let first = log.rows[0].time;
    let last = log.rows[log.rows.len() - 1].time;
    if !(event_time >= first && event_time <= last) {
        return Err(Error::invalid(format!("event time {event_time} outside log span [{first}, {last}]")));
    }
    let tol = log.ts().unwrap_or(1.0) * 1e-6;
    let post: Vec<&LogRow> = log.rows.iter().filter(|r| r.time >= event_time - tol).collect();
    let window = (post.len() / 10).max(1);
    let tail = &post[post.len() - window..];
    let final_value = tail.iter().map(|r| r.terminal_v).sum::<f64>() / window as f64;
    let steady_control = tail.iter().map(|r| r.u_applied_v).sum::<f64>() / window as f64;

    let band = band_fraction * final_value.abs();
    let mut overshoot = 0.0f64;
    let mut control_spike = 0.0f64;
    let mut last_outside: Option<usize> = None;
    for (i, r) in post.iter().enumerate() {
        let dev = (r.terminal_v - final_value).abs();
        overshoot = overshoot.max(dev);
        control_spike = control_spike.max(r.u_unclamped_v.abs());
        if dev > band {
            last_outside = Some(i);
        }
    }
    let settling_time = last_outside.map_or(0.0, |i| post[i].time - event_time);
    let settled = last_outside.is_none_or(|i| i < post.len() - window);
    Ok(PerfMetrics { overshoot, settling_time, settled, control_spike, steady_control, final_value })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub lambda: f64,
    pub rho: f64,
    pub outcome: std::result::Result<PerfMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
    /// Indices into `cells`, best first.
    pub ranking: Vec<usize>,
}

impl SweepTable {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }
}

/// Closed-loop run plus metrics for one tuning pair.
pub fn evaluate(spec: &ScenarioSpec) -> Result<PerfMetrics> {
    let log = run_closed_loop(spec)?;
    compute_metrics(&log, spec.settle_band, spec.last_event_time())
}

/// Runs every `(lambda, rho)` cell with the same seed and events. Cells run in
/// parallel; each owns its generator, so results do not depend on scheduling.
pub fn sweep_pairs(base: &ScenarioSpec, pairs: &[(f64, f64)]) -> Result<SweepTable> {
    if pairs.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let cells: Vec<SweepCell> = pairs
        .par_iter()
        .map(|&(lambda, rho)| SweepCell {
            lambda,
            rho,
            outcome: evaluate(&base.with_tuning(lambda, rho)).map_err(|e| e.to_string()),
        })
        .collect();
    let ranking = rank(&cells);
    Ok(SweepTable { cells, ranking })
}

pub fn sweep(base: &ScenarioSpec, lambdas: &[f64], rhos: &[f64]) -> Result<SweepTable> {
    if lambdas.is_empty() || rhos.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let grid = SweepGrid { lambdas: lambdas.to_vec(), rhos: rhos.to_vec(), pairs: Vec::new() };
    sweep_pairs(base, &grid.cells())
}

/// Settled cells by (settling time, overshoot), then unsettled, then failed.
fn rank(cells: &[SweepCell]) -> Vec<usize> {
    let key = |c: &SweepCell| match &c.outcome {
        Ok(m) if m.settled => (0, m.settling_time, m.overshoot),
        Ok(m) => (1, m.settling_time, m.overshoot),
        Err(_) => (2, 0.0, 0.0),
    };
    let mut idx: Vec<usize> = (0..cells.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (key(&cells[i]), key(&cells[j]));
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)).then(i.cmp(&j))
    });
    idx
}
