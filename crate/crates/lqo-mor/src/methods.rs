//! One reduction: a method applied to a system at a given order.

use lqo_core::baselines::{arnoldi_basis, bt_reduce, pod_basis, rational_krylov_basis, SnapshotSet};
use lqo_core::gradients::{galerkin_embedding, galerkin_reduce, Evaluator};
use lqo_core::lqo::{relative_h2_error, simulate};
use lqo_core::optimizer::{prcg_with, srcg_with, RunTrace};
use lqo_core::stiefel::StiefelPoint;
use lqo_core::LqoSystem;

use crate::config::{Method, Resolved, SignalSettings};
use crate::error::{CliError, CliResult};

/// Outcome of one reduction.
#[derive(Debug, Clone)]
pub struct CellOutput {
    pub reduced: LqoSystem,
    /// `‖Σ − Σ̂‖ / ‖Σ‖`
    pub rel_h2_error: f64,
    /// Iteration history (optimizers only).
    pub trace: Option<RunTrace>,
    /// Remark worth recording next to the result, e.g. a lowered order.
    pub note: Option<String>,
}

impl CellOutput {
    pub fn iterations(&self) -> usize {
        self.trace.as_ref().map_or(0, |t| t.iterations())
    }

    /// Termination reason; `direct` for the non-iterative methods.
    pub fn termination(&self) -> &'static str {
        self.trace.as_ref().map_or("direct", |t| t.termination.as_str())
    }
}

/// Label of a (method, r) cell used in file names and messages.
pub fn cell_name(method: Method, r: usize) -> String {
    format!("{method}_r{r}")
}

/// Simulates the full system with the snapshot signal.
pub fn pod_snapshots(sys: &LqoSystem, signal: &SignalSettings) -> CliResult<SnapshotSet> {
    let u = signal.validate()?;
    let sim = simulate(sys, |t| u.eval(t), signal.t_end, signal.steps)
        .map_err(|e| CliError::from_core("pod snapshots", e))?;
    SnapshotSet::from_simulation(sim, signal.input.clone()).map_err(|e| CliError::from_core("pod snapshots", e))
}

/// Orthonormal starting basis for the optimizers.
pub fn initial_basis(sys: &LqoSystem, r: usize, cfg: &Resolved) -> CliResult<StiefelPoint> {
    let cell = cell_name(cfg.init, r);
    match cfg.init {
        Method::RationalKrylov => rational_krylov_basis(sys.a(), sys.b(), &cfg.shifts_for(r)?),
        _ => arnoldi_basis(sys.a(), sys.b(), r),
    }
    .map_err(|e| CliError::from_core(cell, e))
}

/// Reduces `sys` to order `r`; `snapshots` is simulated on demand for POD when absent.
pub fn reduce(
    sys: &LqoSystem,
    method: Method,
    r: usize,
    cfg: &Resolved,
    snapshots: Option<&SnapshotSet>,
) -> CliResult<CellOutput> {
    if r == 0 || r >= sys.order() {
        return Err(CliError::input(format!("order r = {r} must satisfy 1 <= r < n = {}", sys.order())));
    }
    let cell = cell_name(method, r);
    let core = |e| CliError::from_core(cell.clone(), e);
    let galerkin = |v: StiefelPoint| galerkin_reduce(sys, &v).map_err(core);
    let mut trace = None;
    let mut note = None;
    let reduced = match method {
        Method::Krylov => galerkin(arnoldi_basis(sys.a(), sys.b(), r).map_err(core)?)?,
        Method::RationalKrylov => galerkin(rational_krylov_basis(sys.a(), sys.b(), &cfg.shifts_for(r)?).map_err(core)?)?,
        Method::Pod => {
            let owned;
            let snap = match snapshots {
                Some(s) => s,
                None => {
                    owned = pod_snapshots(sys, &cfg.pod)?;
                    &owned
                }
            };
            galerkin(pod_basis(snap, r).map_err(core)?)?
        }
        Method::Bt => {
            let bt = bt_reduce(sys, r).map_err(core)?;
            if let Some(asked) = bt.truncated_from {
                note = Some(format!("order lowered from {asked} to {}", bt.reduced.order()));
            }
            bt.reduced
        }
        Method::Srcg | Method::Prcg => {
            let v0 = initial_basis(sys, r, cfg)?;
            let ev = Evaluator::new(sys, cfg.backend.resolve(sys)?).map_err(core)?;
            let run = if method == Method::Srcg {
                let run = srcg_with(&ev, v0, &cfg.optimizer).map_err(core)?;
                (run.reduced, run.trace)
            } else {
                let p0 = galerkin_embedding(sys, &v0).map_err(core)?;
                let run = prcg_with(&ev, p0, &cfg.optimizer).map_err(core)?;
                (run.reduced, run.trace)
            };
            trace = Some(run.1);
            run.0
        }
    };
    let rel_h2_error = relative_h2_error(sys, &reduced).map_err(core)?;
    Ok(CellOutput {
        reduced,
        rel_h2_error,
        trace,
        note,
    })
}
