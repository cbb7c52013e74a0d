//! On-disk layout of systems, snapshot sets and signals.
//!
//! A system is a directory holding `A.mtx`, `B.mtx`, `C.mtx`, `M.mtx` and a
//! `system.json` descriptor. Matrices are written with 17 significant digits,
//! so a save/load cycle reproduces every entry exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lqo_core::baselines::SnapshotSet;
use lqo_core::mm::{self, fmt_f64};
use lqo_core::LqoSystem;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DESCRIPTOR: &str = "system.json";

/// Metadata stored next to the matrices of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDescriptor {
    /// `synthetic`, `heat`, `reduced` or `external`.
    pub kind: String,
    pub order: usize,
    pub inputs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    /// Zero-based state index observed by `C` (heat benchmark).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_node: Option<usize>,
    /// Reduction method that produced the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// Order of the system the model was reduced from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduced_from: Option<usize>,
    /// Free-form descriptions of the matrices and signals.
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

impl SystemDescriptor {
    pub fn new(kind: &str, sys: &LqoSystem) -> Self {
        SystemDescriptor {
            kind: kind.to_string(),
            order: sys.order(),
            inputs: sys.inputs(),
            seed: None,
            rng: None,
            output_node: None,
            method: None,
            reduced_from: None,
            labels: BTreeMap::new(),
        }
    }

    pub fn label(mut self, key: &str, value: impl Into<String>) -> Self {
        self.labels.insert(key.to_string(), value.into());
        self
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    fs::write(path, to_json(value))?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn save_system(dir: &Path, sys: &LqoSystem, desc: &SystemDescriptor) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    mm::write(dir.join("A.mtx"), sys.a())?;
    mm::write(dir.join("B.mtx"), sys.b())?;
    mm::write(dir.join("C.mtx"), sys.c())?;
    mm::write(dir.join("M.mtx"), sys.m())?;
    write_json(&dir.join(DESCRIPTOR), desc)
}

/// Loads a system directory; a missing descriptor is tolerated.
pub fn load_system(dir: &Path) -> CliResult<(LqoSystem, SystemDescriptor)> {
    let read = |name: &str| {
        let path = dir.join(name);
        mm::read(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    };
    let sys = LqoSystem::new(read("A.mtx")?, read("B.mtx")?, read("C.mtx")?, read("M.mtx")?)
        .map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    let desc_path = dir.join(DESCRIPTOR);
    let desc = if desc_path.exists() {
        let d: SystemDescriptor = read_json(&desc_path)?;
        if d.order != sys.order() || d.inputs != sys.inputs() {
            return Err(CliError::input(format!(
                "{}: descriptor says order {} with {} inputs, matrices have {} and {}",
                desc_path.display(),
                d.order,
                d.inputs,
                sys.order(),
                sys.inputs()
            )));
        }
        d
    } else {
        SystemDescriptor::new("external", &sys)
    };
    Ok((sys, desc))
}

/// JSON side of a stored snapshot set; the states live in `states.mtx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDescriptor {
    pub input: String,
    pub times: Vec<f64>,
}

pub fn save_snapshots(dir: &Path, snap: &SnapshotSet) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    mm::write(dir.join("states.mtx"), &snap.states)?;
    write_json(
        &dir.join("snapshots.json"),
        &SnapshotDescriptor {
            input: snap.input.clone(),
            times: snap.times.clone(),
        },
    )
}

pub fn load_snapshots(dir: &Path) -> CliResult<SnapshotSet> {
    let states = mm::read(dir.join("states.mtx")).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    let d: SnapshotDescriptor = read_json(&dir.join("snapshots.json"))?;
    SnapshotSet::new(d.times, states, d.input).map_err(|e| CliError::input(e.to_string()))
}

/// CSV with a header row and one row per sample, every value with 17 significant digits.
pub fn signal_csv(header: &[&str], columns: &[&[f64]]) -> String {
    let rows = columns.first().map_or(0, |c| c.len());
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| fmt_f64(c[i])).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}
