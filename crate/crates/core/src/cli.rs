//! Command-line front end: `open-loop`, `closed-loop`, `sweep` and `identify`.
//!
//! Exit codes: 0 success, 1 output i/o failure, 2 configuration or input
//! error, 3 simulation diverged, 4 sweep finished with failed cells.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::parse_scenario;
use crate::error::Error;
use crate::experiment::{compute_metrics, run_scenario, Mode, ScenarioSpec, SweepGrid, TimeSeriesLog};
use crate::io::{
    metrics_to_csv, read_numeric_csv, svg_line_chart, sweep_report, sweep_to_csv, write_atomic, write_log_csv,
    RunManifest, Series,
};
use crate::sysid::{identify, IdentifyReport};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_PARTIAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "dwig", version, about = "Induction generator simulation and adaptive voltage control")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an open-loop plant scenario.
    OpenLoop(RunArgs),
    /// Run a closed-loop adaptive control scenario and compute its metrics.
    ClosedLoop(RunArgs),
    /// Run a closed-loop scenario over a grid of (lambda, rho) pairs.
    Sweep(SweepArgs),
    /// Replay the RLS estimator offline over a logged (u, y) record.
    Identify(IdentifyArgs),
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the controller sample period, seconds.
    #[arg(long)]
    pub ts: Option<f64>,
    /// Override the plant integration step, seconds.
    #[arg(long)]
    pub h: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated forgetting factors; with --rhos replaces the scenario grid.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub rhos: Vec<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e3)]
    pub p0: f64,
    /// Input column; defaults to `u`, then `u_applied_v`.
    #[arg(long)]
    pub u_col: Option<String>,
    /// Output column; defaults to `y`, then `measured_v`.
    #[arg(long)]
    pub y_col: Option<String>,
    /// Directory for `identify.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::DivergedState { .. } | Error::NonFiniteUpdate => EXIT_DIVERGED,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        let message = match &e {
            Error::DivergedState { .. } => format!("simulation diverged: {e}"),
            _ => e.to_string(),
        };
        Self { code, message }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type CmdResult<T> = std::result::Result<T, CliError>;

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    let outcome = match cli.command {
        Command::OpenLoop(a) => cmd_open_loop(&a).map(|_| EXIT_OK),
        Command::ClosedLoop(a) => cmd_closed_loop(&a).map(|_| EXIT_OK),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Identify(a) => cmd_identify(&a).map(|r| {
            print!("{}", identify_text(&r));
            EXIT_OK
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

struct Loaded {
    spec: ScenarioSpec,
    bytes: Vec<u8>,
}

fn load(args: &RunArgs, mode: Mode) -> CmdResult<Loaded> {
    let bytes = fs::read(&args.scenario).map_err(|e| CliError::config(format!("{}: {e}", args.scenario.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::config("scenario file is not UTF-8"))?;
    let dir = args.scenario.parent().unwrap_or_else(|| Path::new("."));
    let mut spec =
        parse_scenario(text, dir).map_err(|e| CliError::config(format!("{}: {}", args.scenario.display(), e)))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(ts) = args.ts {
        spec.ts = ts;
    }
    if let Some(h) = args.h {
        spec.h = h;
    }
    spec.validate().map_err(|e| CliError::config(e.to_string()))?;
    if spec.mode != mode {
        return Err(CliError::config(format!(
            "{}: scenario mode is {:?}, command needs {:?}",
            args.scenario.display(),
            spec.mode,
            mode
        )));
    }
    Ok(Loaded { spec, bytes })
}

fn prepare_out(dir: &Path) -> CmdResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError { code: EXIT_IO, message: format!("{}: {e}", dir.display()) })
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], outputs: &mut Vec<String>) -> CmdResult<()> {
    write_atomic(&dir.join(name), bytes)?;
    outputs.push(name.to_string());
    Ok(())
}

fn voltage_plot(log: &TimeSeriesLog, title: &str) -> String {
    let t = log.column(|r| r.time);
    let v = log.column(|r| r.terminal_v);
    let w = log.column(|r| r.reference_v);
    svg_line_chart(
        title,
        "time [s]",
        "terminal voltage [V]",
        &[Series { name: "terminal", x: &t, y: &v }, Series { name: "reference", x: &t, y: &w }],
    )
}

pub fn cmd_open_loop(args: &RunArgs) -> CmdResult<TimeSeriesLog> {
    let started_at = now();
    let Loaded { spec, bytes } = load(args, Mode::OpenLoop)?;
    let log = run_scenario(&spec)?;
    prepare_out(&args.out)?;
    let mut outputs = Vec::new();
    write_log_csv(&log, &args.out.join("log.csv"))?;
    outputs.push("log.csv".to_string());
    write_file(&args.out, "terminal_voltage.svg", voltage_plot(&log, "Terminal voltage").as_bytes(), &mut outputs)?;
    let mut manifest = RunManifest::new(&args.scenario, &bytes, spec.seed, started_at);
    manifest.outputs = outputs;
    manifest.write(&args.out.join("manifest.json"))?;
    log::info!("open loop: {} rows written to {}", log.rows.len(), args.out.display());
    Ok(log)
}

pub fn cmd_closed_loop(args: &RunArgs) -> CmdResult<TimeSeriesLog> {
    let started_at = now();
    let Loaded { spec, bytes } = load(args, Mode::ClosedLoop)?;
    let log = run_scenario(&spec)?;
    let metrics = compute_metrics(&log, spec.settle_band, spec.last_event_time())?;
    prepare_out(&args.out)?;
    let mut outputs = Vec::new();
    write_log_csv(&log, &args.out.join("log.csv"))?;
    outputs.push("log.csv".to_string());
    let name = if spec.name.is_empty() { "scenario" } else { &spec.name };
    write_file(&args.out, "metrics.csv", &metrics_to_csv(name, spec.lambda, spec.rho, &metrics)?, &mut outputs)?;
    write_file(&args.out, "terminal_voltage.svg", voltage_plot(&log, "Terminal voltage").as_bytes(), &mut outputs)?;

    let t = log.column(|r| r.time);
    let ua = log.column(|r| r.u_applied_v);
    let uu = log.column(|r| r.u_unclamped_v);
    let svg = svg_line_chart(
        "Excitation voltage",
        "time [s]",
        "excitation voltage [V]",
        &[Series { name: "applied", x: &t, y: &ua }, Series { name: "unclamped", x: &t, y: &uu }],
    );
    write_file(&args.out, "excitation_voltage.svg", svg.as_bytes(), &mut outputs)?;

    let thetas: Vec<Vec<f64>> = (0..log.theta_names.len()).map(|j| log.column(|r| r.theta[j])).collect();
    let series: Vec<Series> = log.theta_names.iter().zip(&thetas).map(|(name, y)| Series { name, x: &t, y }).collect();
    let svg = svg_line_chart("Parameter estimates", "time [s]", "estimate [-]", &series);
    write_file(&args.out, "parameter_estimates.svg", svg.as_bytes(), &mut outputs)?;

    let mut manifest = RunManifest::new(&args.scenario, &bytes, spec.seed, started_at);
    manifest.outputs = outputs;
    manifest.write(&args.out.join("manifest.json"))?;
    log::info!(
        "closed loop: overshoot {:.3} V, settling {:.3} s, spike {:.2} V",
        metrics.overshoot,
        metrics.settling_time,
        metrics.control_spike
    );
    Ok(log)
}

/// Returns `EXIT_OK`, or `EXIT_PARTIAL` when some cells failed.
pub fn cmd_sweep(args: &SweepArgs) -> CmdResult<u8> {
    let started_at = now();
    let Loaded { spec, bytes } = load(&args.run, Mode::ClosedLoop)?;
    let cells = match (args.lambdas.is_empty(), args.rhos.is_empty()) {
        (false, false) => SweepGrid { lambdas: args.lambdas.clone(), rhos: args.rhos.clone(), pairs: vec![] }.cells(),
        (true, true) => spec.sweep.as_ref().map(SweepGrid::cells).unwrap_or_default(),
        _ => return Err(CliError::config("--lambdas and --rhos must be given together")),
    };
    if cells.is_empty() {
        return Err(CliError::config("no sweep grid: give --lambdas/--rhos or a [sweep] table"));
    }
    let table = crate::experiment::sweep_pairs(&spec, &cells)?;
    prepare_out(&args.run.out)?;
    let mut outputs = Vec::new();
    write_file(&args.run.out, "sweep.csv", &sweep_to_csv(&table)?, &mut outputs)?;
    let title = format!(
        "Tuning sweep: {} ({} cells)",
        if spec.name.is_empty() { "scenario" } else { &spec.name },
        table.cells.len()
    );
    let report = sweep_report(&table, &title);
    write_file(&args.run.out, "sweep.txt", report.as_bytes(), &mut outputs)?;
    let mut manifest = RunManifest::new(&args.run.scenario, &bytes, spec.seed, started_at);
    manifest.outputs = outputs;
    manifest.write(&args.run.out.join("manifest.json"))?;
    print!("{report}");
    Ok(if table.failures() > 0 { EXIT_PARTIAL } else { EXIT_OK })
}

fn pick_column(header: &[String], explicit: &Option<String>, fallbacks: &[&str]) -> CmdResult<usize> {
    let wanted: Vec<&str> = match explicit {
        Some(c) => vec![c.as_str()],
        None => fallbacks.to_vec(),
    };
    wanted
        .iter()
        .find_map(|w| header.iter().position(|h| h == w))
        .ok_or_else(|| CliError::config(format!("log has none of the columns {}", wanted.join(", "))))
}

pub fn cmd_identify(args: &IdentifyArgs) -> CmdResult<IdentifyReport> {
    let f = fs::File::open(&args.log).map_err(|e| CliError::config(format!("{}: {e}", args.log.display())))?;
    let (header, cols) = read_numeric_csv(f).map_err(|e| CliError::config(format!("{}: {e}", args.log.display())))?;
    let ui = pick_column(&header, &args.u_col, &["u", "u_applied_v"])?;
    let yi = pick_column(&header, &args.y_col, &["y", "measured_v"])?;
    if cols[ui].is_empty() {
        return Err(CliError::config(format!("{}: log has no samples", args.log.display())));
    }
    let report = identify(&cols[ui], &cols[yi], args.order, args.lambda, args.p0)
        .map_err(|e| CliError::config(e.to_string()))?;
    if let Some(dir) = &args.out {
        prepare_out(dir)?;
        let json =
            serde_json::to_vec_pretty(&report).map_err(|e| CliError { code: EXIT_IO, message: e.to_string() })?;
        write_atomic(&dir.join("identify.json"), &json)?;
    }
    Ok(report)
}

pub fn identify_text(r: &IdentifyReport) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "order {}  lambda {}  samples {}", r.order, r.lambda, r.samples);
    for (i, a) in r.model.a().iter().enumerate() {
        let _ = writeln!(s, "a{} = {a:.10e}", i + 1);
    }
    for (j, b) in r.model.b().iter().enumerate() {
        let _ = writeln!(s, "b{j} = {b:.10e}");
    }
    let _ = writeln!(s, "prediction error variance = {:.6e}", r.prediction_error_variance);
    let mags: Vec<String> = r.stability.root_magnitudes.iter().map(|m| format!("{m:.6}")).collect();
    let _ = writeln!(s, "stable = {}  |roots| = [{}]", r.stability.stable, mags.join(", "));
    s
}
