use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lqo_core::lqo::relative_h2_error;
use lqo_core::mm::fmt_f64;
use lqo_mor::bench::{heat_descriptor, run_benchmark, synthetic_descriptor, write_cell, BenchmarkSpec};
use lqo_mor::config::{BackendSettings, Family, Method, OptimizerSettings, ReductionConfig, SignalSettings};
use lqo_mor::error::{CliError, CliResult};
use lqo_mor::generators::{gen_heat, gen_synthetic};
use lqo_mor::io::{load_system, read_json, save_system, signal_csv};
use lqo_mor::methods::{cell_name, reduce};

/// H2-optimal reduction of linear systems with quadratic outputs.
#[derive(Debug, Parser)]
#[command(name = "lqo-mor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a benchmark system.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Reduce a stored system with one method.
    Reduce(ReduceArgs),
    /// Relative H2 error between a full and a reduced system.
    H2err {
        #[arg(long)]
        full: PathBuf,
        #[arg(long)]
        reduced: PathBuf,
    },
    /// Simulate a stored system from the zero state.
    Simulate {
        #[arg(long)]
        sys: PathBuf,
        /// Input signal in `t`, e.g. "100*sin(2*t)".
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Output CSV with columns t,u,y.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark spec.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory (overrides the spec's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum GenCommand {
    /// Random dissipative system with B = C = ones and M = I.
    Synthetic {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference heat equation.
    Heat {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ReduceArgs {
    #[arg(long)]
    sys: PathBuf,
    /// krylov, rational-krylov, pod, bt, srcg or prcg.
    #[arg(long)]
    method: Method,
    #[arg(long)]
    r: usize,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    m_max: Option<usize>,
    /// Sylvester solver inside the optimizers: exact or laguerre.
    #[arg(long)]
    backend: Option<String>,
    /// Laguerre time-scale factor (implies --backend laguerre).
    #[arg(long)]
    alpha: Option<f64>,
    /// Laguerre truncation length (implies --backend laguerre).
    #[arg(long)]
    terms: Option<usize>,
    /// Starting basis of the optimizers: krylov or rational-krylov.
    #[arg(long)]
    init: Option<Method>,
    /// Rational Krylov shifts, comma separated.
    #[arg(long, value_delimiter = ',')]
    shifts: Option<Vec<f64>>,
}

impl ReduceArgs {
    fn overrides(&self) -> CliResult<ReductionConfig> {
        let laguerre = self.alpha.is_some() || self.terms.is_some();
        let backend = match self.backend.as_deref() {
            None if laguerre => Some(BackendSettings::Laguerre { alpha: self.alpha, terms: self.terms }),
            None => None,
            Some("exact") if laguerre => return Err(CliError::input("--alpha/--terms need the laguerre backend")),
            Some("exact") => Some(BackendSettings::Exact),
            Some("laguerre") => Some(BackendSettings::Laguerre { alpha: self.alpha, terms: self.terms }),
            Some(other) => return Err(CliError::input(format!("unknown backend `{other}`"))),
        };
        Ok(ReductionConfig {
            optimizer: OptimizerSettings {
                omega: self.omega,
                gamma: self.gamma,
                c1: self.c1,
                c2: self.c2,
                epsilon: self.epsilon,
                k_max: self.k_max,
                m_max: self.m_max,
            },
            backend,
            init: self.init,
            shifts: self.shifts.clone(),
            pod: None,
        })
    }
}

fn cmd_gen(cmd: GenCommand) -> CliResult<()> {
    let bad = |e: lqo_core::Error| CliError::input(e.to_string());
    let (sys, desc, out) = match cmd {
        GenCommand::Synthetic { n, seed, out } => (gen_synthetic(n, seed).map_err(bad)?, synthetic_descriptor(n, seed), out),
        GenCommand::Heat { n, out } => (gen_heat(n).map_err(bad)?, heat_descriptor(n), out),
    };
    save_system(&out, &sys, &desc)
}

fn cmd_reduce(args: ReduceArgs) -> CliResult<()> {
    let (sys, desc) = load_system(&args.sys)?;
    let file: ReductionConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => ReductionConfig::default(),
    };
    let cfg = file.merged(&args.overrides()?).resolve(Family::from_kind(&desc.kind))?;
    let out = reduce(&sys, args.method, args.r, &cfg, None)?;
    write_cell(&args.out, sys.order(), args.method, args.r, &out)?;
    println!("{} {}", cell_name(args.method, args.r), fmt_f64(out.rel_h2_error));
    Ok(())
}

fn cmd_h2err(full: &Path, reduced: &Path) -> CliResult<()> {
    let (full, _) = load_system(full)?;
    let (red, _) = load_system(reduced)?;
    if full.inputs() != red.inputs() {
        return Err(CliError::input(format!("{} inputs vs {}", full.inputs(), red.inputs())));
    }
    let e = relative_h2_error(&full, &red).map_err(|e| CliError::from_core("h2err", e))?;
    println!("{}", fmt_f64(e));
    Ok(())
}

fn cmd_simulate(sys: &Path, signal: SignalSettings, out: &Path) -> CliResult<()> {
    let (sys, _) = load_system(sys)?;
    let u = signal.validate()?;
    let sim = lqo_core::lqo::simulate(&sys, |t| u.eval(t), signal.t_end, signal.steps)
        .map_err(|e| CliError::from_core("simulate", e))?;
    let inputs: Vec<f64> = sim.times.iter().map(|&t| u.eval(t)).collect();
    fs::write(out, signal_csv(&["t", "u", "y"], &[&sim.times, &inputs, &sim.outputs]))?;
    Ok(())
}

fn cmd_bench(spec_path: &Path, out: Option<PathBuf>) -> CliResult<()> {
    let spec: BenchmarkSpec = read_json(spec_path)?;
    let out = out
        .or_else(|| spec.output.clone())
        .ok_or_else(|| CliError::input("no output directory: pass --out or set `output` in the spec"))?;
    let table = run_benchmark(&spec, &out)?;
    print!("{}", table.to_csv());
    let mut failed = Vec::new();
    for row in table.failures() {
        eprintln!("cell {} failed: {}", cell_name(row.method, row.r), row.error.as_deref().unwrap_or(""));
        failed.push(cell_name(row.method, row.r));
    }
    if !failed.is_empty() {
        return Err(CliError::CellsFailed(failed));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Gen(cmd) => cmd_gen(cmd),
        Command::Reduce(args) => cmd_reduce(args),
        Command::H2err { full, reduced } => cmd_h2err(&full, &reduced),
        Command::Simulate { sys, input, t_end, steps, out } => {
            cmd_simulate(&sys, SignalSettings { input, t_end, steps }, &out)
        }
        Command::Bench { spec, out } => cmd_bench(&spec, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lqo-mor: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
