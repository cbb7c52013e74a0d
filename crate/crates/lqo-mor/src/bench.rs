//! Benchmark driver: one system, a grid of (method, r) cells, files on disk.
//!
//! Output layout under the output directory:
//!
//! ```text
//! spec.json                 the spec with every default filled in
//! system/                   A/B/C/M.mtx, system.json, simulation.csv (t,u,y)
//! snapshots/                states.mtx + snapshots.json (when POD is run)
//! cells/<method>_r<r>/      reduced model, result.json, simulation.csv (t,y,abs_err),
//!                           trace.csv (optimizers) or error.txt (failed cells)
//! table.csv                 method,r,rel_h2_error,iterations,termination,status
//! timing.csv                method,r,wall_ms
//! ```
//!
//! Everything except `timing.csv` and the `wall_ms` column of the traces is a
//! pure function of the spec.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lqo_core::baselines::SnapshotSet;
use lqo_core::lqo::simulate;
use lqo_core::mm::fmt_f64;
use lqo_core::LqoSystem;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Family, Method, ReductionConfig, Resolved, SignalSettings};
use crate::error::{CliError, CliResult};
use crate::generators::{gen_heat, gen_synthetic, heat_output_node, RNG_NAME};
use crate::io::{save_snapshots, save_system, signal_csv, write_json, SystemDescriptor};
use crate::methods::{cell_name, pod_snapshots, reduce, CellOutput};

/// The benchmark system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    Synthetic { n: usize, seed: u64 },
    Heat { n: usize },
}

impl SystemSpec {
    pub fn order(&self) -> usize {
        match *self {
            SystemSpec::Synthetic { n, .. } | SystemSpec::Heat { n } => n,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            SystemSpec::Synthetic { .. } => Family::Synthetic,
            SystemSpec::Heat { .. } => Family::Heat,
        }
    }

    pub fn build(&self) -> CliResult<(LqoSystem, SystemDescriptor)> {
        let bad = |e: lqo_core::Error| CliError::input(e.to_string());
        match *self {
            SystemSpec::Synthetic { n, seed } => Ok((gen_synthetic(n, seed).map_err(bad)?, synthetic_descriptor(n, seed))),
            SystemSpec::Heat { n } => Ok((gen_heat(n).map_err(bad)?, heat_descriptor(n))),
        }
    }
}

/// Descriptor of a generated random system.
pub fn synthetic_descriptor(n: usize, seed: u64) -> SystemDescriptor {
    SystemDescriptor {
        kind: "synthetic".into(),
        order: n,
        inputs: 1,
        seed: Some(seed),
        rng: Some(RNG_NAME.into()),
        output_node: None,
        method: None,
        reduced_from: None,
        labels: Default::default(),
    }
    .label("A", "Q diag(U(-2,-0.1)) Q^T + skew(U(-1,1))")
    .label("B", "ones")
    .label("C", "ones")
    .label("M", "identity")
}

/// Descriptor of a generated heat system.
pub fn heat_descriptor(n: usize) -> SystemDescriptor {
    let node = heat_output_node(n);
    SystemDescriptor {
        kind: "heat".into(),
        order: n,
        inputs: 1,
        seed: None,
        rng: None,
        output_node: Some(node),
        method: None,
        reduced_from: None,
        labels: Default::default(),
    }
    .label("A", "(n+1)^2 tridiag(1,-2,1), unit diffusion")
    .label("B", "ones (uniform forcing)")
    .label("C", format!("temperature at node {node} (x = {}/{})", node + 1, n + 1))
    .label("M", "identity / n")
}

/// A benchmark as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub system: SystemSpec,
    pub orders: Vec<usize>,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub config: ReductionConfig,
    /// Signal for the output comparison; defaults per system family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SignalSettings>,
    /// Output directory; the command line may override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl BenchmarkSpec {
    pub fn validate(&self) -> CliResult<Resolved> {
        let n = self.system.order();
        if n < 2 {
            return Err(CliError::input(format!("system order must be at least 2, got {n}")));
        }
        if self.methods.is_empty() {
            return Err(CliError::input("methods must not be empty"));
        }
        if self.orders.is_empty() {
            return Err(CliError::input("orders must not be empty"));
        }
        if let Some(&r) = self.orders.iter().find(|&&r| r == 0 || r >= n) {
            return Err(CliError::input(format!("order {r} must satisfy 1 <= r < n = {n}")));
        }
        let mut seen = Vec::new();
        for cell in self.cells() {
            if seen.contains(&cell) {
                return Err(CliError::input(format!("duplicate cell {}", cell_name(cell.0, cell.1))));
            }
            seen.push(cell);
        }
        self.simulation_signal().validate()?;
        self.config.resolve(self.system.family())
    }

    pub fn simulation_signal(&self) -> SignalSettings {
        self.simulation
            .clone()
            .unwrap_or_else(|| SignalSettings::simulation_default(self.system.family()))
    }

    /// Grid in table order: methods as listed, orders as listed within each method.
    pub fn cells(&self) -> Vec<(Method, usize)> {
        self.methods
            .iter()
            .flat_map(|&m| self.orders.iter().map(move |&r| (m, r)))
            .collect()
    }
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub r: usize,
    /// `None` when the cell failed.
    pub rel_h2_error: Option<f64>,
    pub iterations: usize,
    pub termination: String,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub const CSV_HEADER: &'static str = "method,r,rel_h2_error,iterations,termination,status";

    pub fn get(&self, method: Method, r: usize) -> Option<&ResultRow> {
        self.rows.iter().find(|row| row.method == method && row.r == r)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|row| row.error.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                row.method,
                row.r,
                row.rel_h2_error.map(fmt_f64).unwrap_or_default(),
                row.iterations,
                row.termination,
                if row.error.is_some() { "failed" } else { "ok" }
            );
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("method,r,wall_ms\n");
        for row in &self.rows {
            let _ = writeln!(out, "{},{},{:.3}", row.method, row.r, row.wall_ms);
        }
        out
    }
}

/// Per-cell summary written to `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub r: usize,
    /// 17 significant digits, as in the table.
    pub rel_h2_error: String,
    pub iterations: usize,
    pub termination: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CellSummary {
    pub fn new(method: Method, r: usize, out: &CellOutput) -> Self {
        CellSummary {
            method,
            r,
            rel_h2_error: fmt_f64(out.rel_h2_error),
            iterations: out.iterations(),
            termination: out.termination().to_string(),
            note: out.note.clone(),
        }
    }
}

/// Writes the reduced model and its side files into `dir`.
pub fn write_cell(
    dir: &Path,
    full_order: usize,
    method: Method,
    r: usize,
    out: &CellOutput,
) -> CliResult<()> {
    let mut desc = SystemDescriptor::new("reduced", &out.reduced);
    desc.method = Some(method.to_string());
    desc.reduced_from = Some(full_order);
    save_system(dir, &out.reduced, &desc)?;
    write_json(&dir.join("result.json"), &CellSummary::new(method, r, out))?;
    if let Some(trace) = &out.trace {
        fs::write(dir.join("trace.csv"), trace.to_csv())?;
    }
    Ok(())
}

struct FullRun {
    signal: SignalSettings,
    times: Vec<f64>,
    outputs: Vec<f64>,
}

fn simulate_signal(sys: &LqoSystem, signal: &SignalSettings, what: &str) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let u = signal.validate()?;
    let sim = simulate(sys, |t| u.eval(t), signal.t_end, signal.steps).map_err(|e| CliError::from_core(what, e))?;
    Ok((sim.times, sim.outputs))
}

fn run_cell(
    sys: &LqoSystem,
    spec: &BenchmarkSpec,
    cfg: &Resolved,
    snapshots: Option<&Result<SnapshotSet, String>>,
    full: &FullRun,
    cells_dir: &Path,
    (method, r): (Method, usize),
) -> CliResult<CellOutput> {
    let snap = match (method, snapshots) {
        (Method::Pod, Some(Err(msg))) => {
            return Err(CliError::Numerical {
                cell: cell_name(method, r),
                source: lqo_core::Error::NoConvergence(format!("snapshot simulation failed: {msg}")),
            })
        }
        (_, Some(Ok(s))) => Some(s),
        _ => None,
    };
    let out = reduce(sys, method, r, cfg, snap)?;
    let dir = cells_dir.join(cell_name(method, r));
    write_cell(&dir, spec.system.order(), method, r, &out)?;
    let (_, y) = simulate_signal(&out.reduced, &full.signal, &cell_name(method, r))?;
    let err: Vec<f64> = y.iter().zip(&full.outputs).map(|(a, b)| (a - b).abs()).collect();
    fs::write(dir.join("simulation.csv"), signal_csv(&["t", "y", "abs_err"], &[&full.times, &y, &err]))?;
    Ok(out)
}

/// Runs every (method, r) cell of `spec`, writing results under `out_dir`.
///
/// A failing cell is recorded in the table (status `failed`, message in its
/// `error.txt`) and the remaining cells still run. Cells run in parallel;
/// each one is sequential and its results do not depend on scheduling.
pub fn run_benchmark(spec: &BenchmarkSpec, out_dir: &Path) -> CliResult<ResultTable> {
    let cfg = spec.validate()?;
    let (sys, desc) = spec.system.build()?;
    fs::create_dir_all(out_dir)?;
    let mut resolved = spec.clone();
    resolved.simulation = Some(spec.simulation_signal());
    resolved.output = None;
    resolved.config.optimizer = crate::config::OptimizerSettings {
        omega: Some(cfg.optimizer.omega),
        gamma: Some(cfg.optimizer.gamma),
        c1: Some(cfg.optimizer.c1),
        c2: Some(cfg.optimizer.c2),
        epsilon: Some(cfg.optimizer.epsilon),
        k_max: Some(cfg.optimizer.k_max),
        m_max: Some(cfg.optimizer.m_max),
    };
    resolved.config.backend = Some(cfg.backend);
    resolved.config.init = Some(cfg.init);
    resolved.config.pod = Some(cfg.pod.clone());
    write_json(&out_dir.join("spec.json"), &resolved)?;

    let sys_dir = out_dir.join("system");
    save_system(&sys_dir, &sys, &desc)?;
    let signal = spec.simulation_signal();
    let u = signal.validate()?;
    let (times, outputs) = simulate_signal(&sys, &signal, "full-order simulation")?;
    let inputs: Vec<f64> = times.iter().map(|&t| u.eval(t)).collect();
    fs::write(sys_dir.join("simulation.csv"), signal_csv(&["t", "u", "y"], &[&times, &inputs, &outputs]))?;
    let full = FullRun { signal, times, outputs };

    let snapshots = if spec.methods.contains(&Method::Pod) {
        let snap = pod_snapshots(&sys, &cfg.pod).map_err(|e| e.to_string());
        if let Ok(s) = &snap {
            save_snapshots(&out_dir.join("snapshots"), s)?;
        }
        Some(snap)
    } else {
        None
    };

    let cells_dir = out_dir.join("cells");
    let results: Vec<(Method, usize, f64, CliResult<CellOutput>)> = spec
        .cells()
        .into_par_iter()
        .map(|cell| {
            let start = Instant::now();
            let res = run_cell(&sys, spec, &cfg, snapshots.as_ref(), &full, &cells_dir, cell);
            (cell.0, cell.1, start.elapsed().as_secs_f64() * 1e3, res)
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    for (method, r, wall_ms, res) in results {
        let row = match res {
            Ok(out) => ResultRow {
                method,
                r,
                rel_h2_error: Some(out.rel_h2_error),
                iterations: out.iterations(),
                termination: out.termination().to_string(),
                wall_ms,
                error: None,
            },
            // write failures are fatal; anything else belongs to the cell
            Err(CliError::Io(e)) => return Err(CliError::Io(e)),
            Err(e) => {
                let dir = cells_dir.join(cell_name(method, r));
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("error.txt"), format!("{e}\n"))?;
                ResultRow {
                    method,
                    r,
                    rel_h2_error: None,
                    iterations: 0,
                    termination: "error".into(),
                    wall_ms,
                    error: Some(e.to_string()),
                }
            }
        };
        rows.push(row);
    }
    let table = ResultTable { rows };
    fs::write(out_dir.join("table.csv"), table.to_csv())?;
    fs::write(out_dir.join("timing.csv"), table.timing_csv())?;
    Ok(table)
}

/// Every output file of a benchmark directory keyed by relative path, minus
/// the clock readings: `timing.csv` is skipped and the trailing `wall_ms`
/// column is cut from each `trace.csv`. Two runs of one spec give equal maps.
pub fn numeric_outputs(dir: &Path) -> CliResult<BTreeMap<String, Vec<u8>>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
                continue;
            }
            let rel = path.strip_prefix(root).expect("walk stays below its root");
            let key = rel.to_string_lossy().replace('\\', "/");
            if key == "timing.csv" {
                continue;
            }
            let mut bytes = fs::read(&path)?;
            if path.file_name().is_some_and(|n| n == "trace.csv") {
                let text = String::from_utf8_lossy(&bytes).into_owned();
                bytes = text
                    .lines()
                    .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
                    .collect::<Vec<_>>()
                    .join("\n")
                    .into_bytes();
            }
            out.insert(key, bytes);
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}
