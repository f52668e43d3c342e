//! CSV logs and reports, SVG charts and run manifests.
//!
//! Every float is written with 17 significant digits (`{:.16e}`) so a log
//! read back parses to the exact values that were written, and two runs with
//! the same seed produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiment::{LogRow, PerfMetrics, SweepTable, TimeSeriesLog};

/// Fixed leading columns of a scenario log; parameter estimates follow.
pub const LOG_COLUMNS: [&str; 12] = [
    "time_s",
    "terminal_pu",
    "terminal_v",
    "measured_v",
    "u_applied_v",
    "u_unclamped_v",
    "speed_pu",
    "torque_pu",
    "load_pu",
    "reference_v",
    "prediction_error_v",
    "realizable",
];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn log_to_csv(log: &TimeSeriesLog) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = LOG_COLUMNS.iter().copied().chain(log.theta_names.iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(csv_err)?;
    for r in &log.rows {
        let mut rec: Vec<String> = [
            r.time,
            r.terminal_pu,
            r.terminal_v,
            r.measured_v,
            r.u_applied_v,
            r.u_unclamped_v,
            r.speed_pu,
            r.torque_pu,
            r.load_pu,
            r.reference_v,
            r.prediction_error_v,
        ]
        .iter()
        .map(|v| fmt_f64(*v))
        .collect();
        rec.push(if r.realizable { "1" } else { "0" }.to_string());
        rec.extend(r.theta.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

pub fn write_log_csv(log: &TimeSeriesLog, path: &Path) -> Result<()> {
    write_atomic(path, &log_to_csv(log)?)
}

/// Reads a CSV of numeric columns, returning the header and the columns.
pub fn read_numeric_csv<R: std::io::Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|s| s.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Config("CSV has no header".into()));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("CSV record {}: {e}", line + 1)))?;
        if rec.len() != header.len() {
            return Err(Error::Config(format!(
                "CSV record {} has {} fields, expected {}",
                line + 1,
                rec.len(),
                header.len()
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Config(format!("CSV record {}, column {}: not a number: {field:?}", line + 1, header[c]))
            })?;
            cols[c].push(v);
        }
    }
    Ok((header, cols))
}

pub fn log_from_csv<R: std::io::Read>(reader: R) -> Result<TimeSeriesLog> {
    let (header, cols) = read_numeric_csv(reader)?;
    if header.len() < LOG_COLUMNS.len() || header[..LOG_COLUMNS.len()] != LOG_COLUMNS {
        return Err(Error::Config(format!("log header must start with {}", LOG_COLUMNS.join(","))));
    }
    let n = cols[0].len();
    let rows = (0..n)
        .map(|i| LogRow {
            time: cols[0][i],
            terminal_pu: cols[1][i],
            terminal_v: cols[2][i],
            measured_v: cols[3][i],
            u_applied_v: cols[4][i],
            u_unclamped_v: cols[5][i],
            speed_pu: cols[6][i],
            torque_pu: cols[7][i],
            load_pu: cols[8][i],
            reference_v: cols[9][i],
            prediction_error_v: cols[10][i],
            realizable: cols[11][i] != 0.0,
            theta: cols[LOG_COLUMNS.len()..].iter().map(|c| c[i]).collect(),
        })
        .collect();
    Ok(TimeSeriesLog { theta_names: header[LOG_COLUMNS.len()..].to_vec(), rows })
}

pub fn read_log_csv(path: &Path) -> Result<TimeSeriesLog> {
    let f = fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    log_from_csv(f)
}

const METRIC_COLUMNS: [&str; 9] = [
    "name",
    "lambda",
    "rho",
    "overshoot_v",
    "settling_time_s",
    "settled",
    "control_spike_v",
    "steady_control_v",
    "final_value_v",
];

fn metric_fields(m: &PerfMetrics) -> Vec<String> {
    vec![
        fmt_f64(m.overshoot),
        fmt_f64(m.settling_time),
        (m.settled as u8).to_string(),
        fmt_f64(m.control_spike),
        fmt_f64(m.steady_control),
        fmt_f64(m.final_value),
    ]
}

pub fn metrics_to_csv(name: &str, lambda: f64, rho: f64, m: &PerfMetrics) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRIC_COLUMNS).map_err(csv_err)?;
    let mut rec = vec![name.to_string(), fmt_f64(lambda), fmt_f64(rho)];
    rec.extend(metric_fields(m));
    w.write_record(&rec).map_err(csv_err)?;
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

pub fn sweep_to_csv(table: &SweepTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "rank",
        "lambda",
        "rho",
        "status",
        "overshoot_v",
        "settling_time_s",
        "settled",
        "control_spike_v",
        "steady_control_v",
        "final_value_v",
    ])
    .map_err(csv_err)?;
    for (rank, &i) in table.ranking.iter().enumerate() {
        let c = &table.cells[i];
        let mut rec = vec![(rank + 1).to_string(), fmt_f64(c.lambda), fmt_f64(c.rho)];
        match &c.outcome {
            Ok(m) => {
                rec.push("ok".into());
                rec.extend(metric_fields(m));
            }
            Err(e) => {
                rec.push(format!("failed: {e}"));
                rec.extend(std::iter::repeat_n(String::new(), 6));
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Human-readable ranking table.
pub fn sweep_report(table: &SweepTable, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(s, "Ranking rule: settled cells first, then settling time, then overshoot.");
    let _ = writeln!(s, "Metrics come from an illustrative machine model; the ordering is qualitative and is not");
    let _ = writeln!(s, "expected to match externally reported quality labels for the same tuning pairs.");
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:>4}  {:>7}  {:>8}  {:>12}  {:>11}  {:>7}  {:>15}  {:>16}",
        "rank", "lambda", "rho", "overshoot[V]", "settling[s]", "settled", "ctrl spike[V]", "steady ctrl[V]"
    );
    for (rank, &i) in table.ranking.iter().enumerate() {
        let c = &table.cells[i];
        match &c.outcome {
            Ok(m) => {
                let _ = writeln!(
                    s,
                    "{:>4}  {:>7.4}  {:>8.5}  {:>12.4}  {:>11.3}  {:>7}  {:>15.3}  {:>16.3}",
                    rank + 1,
                    c.lambda,
                    c.rho,
                    m.overshoot,
                    m.settling_time,
                    if m.settled { "yes" } else { "no" },
                    m.control_spike,
                    m.steady_control
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{:>4}  {:>7.4}  {:>8.5}  failed: {e}", rank + 1, c.lambda, c.rho);
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub scenario_path: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub started_at: String,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(scenario_path: &Path, scenario_bytes: &[u8], seed: u64, started_at: String) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario_path: scenario_path.display().to_string(),
            scenario_sha256: sha256_hex(scenario_bytes),
            seed,
            started_at,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        write_atomic(path, &json)
    }
}

pub struct Series<'a> {
    pub name: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

const PALETTE: [&str; 10] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

fn nice_step(span: f64, target_ticks: usize) -> f64 {
    let raw = span / target_ticks as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1.0) * 1e-3;
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// Static SVG line chart with labelled axes and a legend.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (900.0, 480.0);
    let (left, right, top, bottom) = (90.0, 170.0, 40.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.x.iter()));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.y.iter()));
    let ypad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - ypad, y1 + ypad);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(s, r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);

    let xs = nice_step(x1 - x0, 8);
    let mut t = (x0 / xs).ceil() * xs;
    while t <= x1 + 1e-9 * xs {
        let px = sx(t);
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{top}" x2="{px:.2}" y2="{}" stroke="#ddd"/>"##, top + ph);
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            top + ph + 16.0,
            tick_label(t, xs)
        );
        t += xs;
    }
    let ys = nice_step(y1 - y0, 6);
    let mut t = (y0 / ys).ceil() * ys;
    while t <= y1 + 1e-9 * ys {
        let py = sy(t);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            py + 4.0,
            tick_label(t, ys)
        );
        t += ys;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="22" y="{0}" text-anchor="middle" transform="rotate(-90 22 {0})">{1}</text>"#,
        top + ph / 2.0,
        escape(y_label)
    );

    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for (x, y) in ser.x.iter().zip(ser.y) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(*x), sy(*y));
            }
        }
        let _ =
            writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#, pts.trim_end());
        let ly = top + 14.0 + 18.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
