//! TOML configuration files for machines and scenarios.
//!
//! Parsing is strict: unknown keys are rejected and every machine parameter
//! is required. A scenario names its machine file with the `machine` key,
//! resolved relative to the scenario file.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::ScenarioSpec;
use crate::machine::MachineParams;

pub fn parse_machine(text: &str) -> Result<MachineParams> {
    let params: MachineParams = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    params.validate()?;
    Ok(params)
}

pub fn load_machine(path: &Path) -> Result<MachineParams> {
    let text = read(path)?;
    parse_machine(&text).map_err(|e| prefix(path, e))
}

/// Parses a scenario; `base_dir` anchors a relative `machine` path.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<ScenarioSpec> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    let machine = match table.remove("machine") {
        None => return Err(Error::Config("missing field `machine`".into())),
        Some(toml::Value::String(p)) => {
            let path = base_dir.join(PathBuf::from(p));
            load_machine(&path)?
        }
        Some(other) => {
            let params: MachineParams =
                other.try_into().map_err(|e: toml::de::Error| Error::Config(format!("machine: {}", e.message())))?;
            params.validate()?;
            params
        }
    };
    let mut spec: ScenarioSpec =
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    spec.machine = machine;
    spec.validate()?;
    Ok(spec)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = read(path)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scenario(&text, dir).map_err(|e| prefix(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn prefix(path: &Path, e: Error) -> Error {
    match e {
        Error::Config(m) if !m.starts_with(&path.display().to_string()) => {
            Error::Config(format!("{}: {m}", path.display()))
        }
        other => other,
    }
}

/// Machine file for [`MachineParams::default`].
pub fn default_machine_toml() -> String {
    toml::to_string(&MachineParams::default()).expect("machine params serialize")
}
