//! Dai–Yuan Riemannian conjugate gradient with a backtracking Wolfe line
//! search, on `St(n,r)` (SRCG) and on the product manifold (PRCG).
//!
//! Directions are updated as `η_{k+1} = −g_{k+1} + β_{k+1} T̃(η_k)`, where `T̃`
//! is the transport along the accepted step, deflated so that
//! `‖T̃(η)‖ ≤ ‖η‖`. The same deflated vector enters the curvature test and
//! `β`. Trial points whose reduced model is unstable have cost `+∞`.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::gradients::{galerkin_reduce, product_reduce, CostState, Evaluator, SolverBackend};
use crate::linalg::Matrix;
use crate::lqo::LqoSystem;
use crate::mm::fmt_f64;
use crate::stiefel::{
    deflation_factor, orthonormality_residual, product_retract_with_factor, retract_with_factor,
    transport_with_factor, ProductPoint, ProductTangent, StiefelPoint, StiefelTangent,
};

/// Line-search and stopping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Backtracking base `ω ∈ (0,1)`.
    pub omega: f64,
    /// Initial step `γ > 0`; trial steps are `ω^m γ`.
    pub gamma: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant, `c1 < c2 < 1`.
    pub c2: f64,
    /// Stop when `‖g_k‖ / ‖g_0‖ < epsilon`.
    pub epsilon: f64,
    pub k_max: usize,
    pub m_max: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            omega: 0.8,
            gamma: 1.0,
            c1: 0.25,
            c2: 0.95,
            epsilon: 1e-3,
            k_max: 500,
            m_max: 60,
        }
    }
}

impl OptimizerConfig {
    /// Settings used for the randomly generated benchmark.
    pub fn synthetic() -> Self {
        OptimizerConfig {
            epsilon: 1e-4,
            ..Default::default()
        }
    }

    /// Settings used for the heat-equation benchmark.
    pub fn heat() -> Self {
        OptimizerConfig {
            omega: 0.8,
            gamma: 200.0,
            c1: 0.3,
            c2: 0.9,
            epsilon: 1e-3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return bad("omega must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if !(self.c1 > 0.0 && self.c1 < self.c2 && self.c2 < 1.0) {
            return bad("Wolfe constants need 0 < c1 < c2 < 1");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.k_max == 0 || self.m_max == 0 {
            return bad("k_max and m_max must be at least 1");
        }
        Ok(())
    }

    /// `ω^m γ`
    pub fn step(&self, m: usize) -> f64 {
        self.gamma * self.omega.powi(m as i32)
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "k_max",
            Termination::LineSearchFailed => "line_search_failed",
        }
    }
}

/// State at iterate `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub cost: f64,
    pub grad_norm: f64,
    /// `δ_k = ‖g_k‖ / ‖g_0‖`
    pub grad_rel: f64,
    /// Step that produced this iterate (0 at `k = 0`).
    pub step: f64,
    /// `β_k` used to form `η_k` (0 at `k = 0` and after a restart).
    pub beta: f64,
    /// Backtracking exponent `m` of the accepted step.
    pub ls_trials: usize,
    pub wall_ms: f64,
    /// `⟨g_k, T̃(η_{k−1})⟩` and `⟨g_{k−1}, η_{k−1}⟩`, the two terms of the `β` denominator.
    pub beta_terms: (f64, f64),
    /// `‖T̃(η_{k−1})‖ / ‖η_{k−1}‖`
    pub transport_ratio: f64,
    /// `η_k` was reset to `−g_k`.
    pub restart: bool,
    /// `‖VᵀV − I‖_F` of the iterate.
    pub orthonormality: f64,
}

/// Per-iteration history of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl RunTrace {
    pub const CSV_HEADER: &'static str = "k,cost,grad_norm,grad_rel,step,beta,ls_trials,wall_ms";

    /// Iterations performed (accepted steps).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("a trace always holds the initial record")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.3}",
                r.k,
                fmt_f64(r.cost),
                fmt_f64(r.grad_norm),
                fmt_f64(r.grad_rel),
                fmt_f64(r.step),
                fmt_f64(r.beta),
                r.ls_trials,
                r.wall_ms
            );
        }
        out
    }
}

/// Operations the conjugate-gradient loop needs from a tangent vector.
pub trait TangentVector: Clone {
    fn inner(&self, other: &Self) -> f64;
    fn scaled(&self, s: f64) -> Self;
    /// `self + s·other`
    fn add_scaled(&self, s: f64, other: &Self) -> Self;
    fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

impl TangentVector for StiefelTangent {
    fn inner(&self, other: &Self) -> f64 {
        StiefelTangent::inner(self, other)
    }
    fn scaled(&self, s: f64) -> Self {
        StiefelTangent::scaled(self, s)
    }
    fn add_scaled(&self, s: f64, other: &Self) -> Self {
        StiefelTangent::add_scaled(self, s, other)
    }
}

impl TangentVector for ProductTangent {
    fn inner(&self, other: &Self) -> f64 {
        ProductTangent::inner(self, other)
    }
    fn scaled(&self, s: f64) -> Self {
        ProductTangent::scaled(self, s)
    }
    fn add_scaled(&self, s: f64, other: &Self) -> Self {
        ProductTangent::add_scaled(self, s, other)
    }
}

/// A smooth cost on a manifold with retraction and vector transport.
pub trait Problem {
    type Point: Clone;
    type Tangent: TangentVector;
    /// Whatever the cost evaluation leaves behind for the gradient.
    type State;
    /// Auxiliary data of a retraction, reused by the transport.
    type Step;

    /// Cost and state, or `None` for an infeasible point (cost `+∞`).
    fn evaluate(&self, x: &Self::Point) -> Result<Option<(f64, Self::State)>>;
    fn gradient(&self, x: &Self::Point, state: &Self::State) -> Result<Self::Tangent>;
    fn retract(&self, x: &Self::Point, eta: &Self::Tangent) -> Result<(Self::Point, Self::Step)>;
    /// Transports `xi` into the tangent space at the retracted point.
    fn transport(&self, to: &Self::Point, step: &Self::Step, xi: &Self::Tangent) -> Result<Self::Tangent>;
    /// `‖VᵀV − I‖_F` of the Stiefel part.
    fn orthonormality(&self, x: &Self::Point) -> f64;
}

/// `‖g_k‖² / (⟨g_k, T̃η_{k−1}⟩ − ⟨g_{k−1}, η_{k−1}⟩)`, or `None` when the
/// denominator is below `1e-14·‖g_k‖²` in magnitude (restart).
pub fn dy_beta<T: TangentVector>(g: &T, transported_prev_dir: &T, g_prev: &T, prev_dir: &T) -> Option<f64> {
    dy_beta_terms(g.inner(g), g.inner(transported_prev_dir), g_prev.inner(prev_dir))
}

fn dy_beta_terms(g_sq: f64, g_dot_t: f64, gprev_dot_eta: f64) -> Option<f64> {
    let den = g_dot_t - gprev_dot_eta;
    if !(den.abs() >= 1e-14 * g_sq) || !den.is_finite() || g_sq == 0.0 {
        return None;
    }
    Some(g_sq / den)
}

/// An accepted line-search step.
pub struct Accepted<P: Problem + ?Sized> {
    pub t: f64,
    /// Exponent `m` with `t = ω^m γ`.
    pub m: usize,
    pub point: P::Point,
    pub cost: f64,
    pub state: P::State,
    pub gradient: P::Tangent,
    /// Deflated transport of the search direction to the new point.
    pub transported: P::Tangent,
}

/// Outcome of [`wolfe_search`].
pub enum LineSearch<P: Problem + ?Sized> {
    Accepted(Accepted<P>),
    /// No exponent `m < m_max` satisfied both conditions.
    Failed,
}

/// Smallest `m` such that `t = ω^m γ` satisfies
/// `f(R(tη)) ≤ f + c₁ t ⟨g, η⟩` and `⟨g(R(tη)), T̃(η)⟩ ≥ c₂ ⟨g, η⟩`.
pub fn wolfe_search<P: Problem + ?Sized>(
    problem: &P,
    x: &P::Point,
    cost: f64,
    grad: &P::Tangent,
    direction: &P::Tangent,
    cfg: &OptimizerConfig,
) -> Result<LineSearch<P>> {
    let slope = grad.inner(direction);
    if !(slope < 0.0) {
        return Err(Error::InvalidArgument("search direction is not a descent direction".into()));
    }
    let dir_norm = direction.norm();
    for m in 0..cfg.m_max {
        let t = cfg.step(m);
        let trial = direction.scaled(t);
        let (point, step) = match problem.retract(x, &trial) {
            Ok(v) => v,
            Err(e) if e.is_numerical() => continue,
            Err(e) => return Err(e),
        };
        let (new_cost, state) = match problem.evaluate(&point) {
            Ok(Some(v)) => v,
            Ok(None) => continue,
            Err(e) if e.is_numerical() => continue,
            Err(e) => return Err(e),
        };
        if !(new_cost <= cost + cfg.c1 * t * slope) {
            continue;
        }
        let gradient = problem.gradient(&point, &state)?;
        let raw = problem.transport(&point, &step, direction)?;
        let transported = raw.scaled(deflation_factor(raw.norm(), dir_norm));
        if gradient.inner(&transported) >= cfg.c2 * slope {
            return Ok(LineSearch::Accepted(Accepted {
                t,
                m,
                point,
                cost: new_cost,
                state,
                gradient,
                transported,
            }));
        }
    }
    Ok(LineSearch::Failed)
}

/// Final iterate and history of a conjugate-gradient run.
#[derive(Debug, Clone)]
pub struct Solution<X> {
    pub point: X,
    pub cost: f64,
    pub trace: RunTrace,
}

/// Dai–Yuan Riemannian conjugate gradient from `x0`.
pub fn riemannian_cg<P: Problem + ?Sized>(problem: &P, x0: P::Point, cfg: &OptimizerConfig) -> Result<Solution<P::Point>> {
    cfg.validate()?;
    let clock = Instant::now();
    let elapsed = || clock.elapsed().as_secs_f64() * 1e3;
    let (mut cost, state) = problem
        .evaluate(&x0)?
        .ok_or_else(|| Error::Unstable { max_real: f64::NAN })?;
    let mut grad = problem.gradient(&x0, &state)?;
    let g0 = grad.norm();
    let rel = |g: f64| if g0 > 0.0 { g / g0 } else { 0.0 };
    let mut x = x0;
    let mut direction = grad.scaled(-1.0);
    let mut records = vec![IterationRecord {
        k: 0,
        cost,
        grad_norm: g0,
        grad_rel: rel(g0),
        step: 0.0,
        beta: 0.0,
        ls_trials: 0,
        wall_ms: elapsed(),
        beta_terms: (0.0, 0.0),
        transport_ratio: 0.0,
        restart: false,
        orthonormality: problem.orthonormality(&x),
    }];
    let termination = loop {
        let last = records.last().expect("initial record");
        if last.grad_rel < cfg.epsilon {
            break Termination::Converged;
        }
        let k = last.k;
        if k >= cfg.k_max {
            break Termination::MaxIterations;
        }
        let mut restart = false;
        if !(grad.inner(&direction) < 0.0) {
            direction = grad.scaled(-1.0);
            restart = true;
        }
        let accepted = match wolfe_search(problem, &x, cost, &grad, &direction, cfg)? {
            LineSearch::Accepted(a) => a,
            LineSearch::Failed => break Termination::LineSearchFailed,
        };
        let g_sq = accepted.gradient.inner(&accepted.gradient);
        let g_dot_t = accepted.gradient.inner(&accepted.transported);
        let gprev_dot_eta = grad.inner(&direction);
        let transport_ratio = accepted.transported.norm() / direction.norm();
        let (beta, reset) = match dy_beta_terms(g_sq, g_dot_t, gprev_dot_eta) {
            Some(b) => (b, false),
            None => (0.0, true),
        };
        direction = accepted.gradient.scaled(-1.0).add_scaled(beta, &accepted.transported);
        // the restart flag belongs to the iterate whose direction was reset
        if let Some(prev) = records.last_mut() {
            prev.restart |= restart;
        }
        x = accepted.point;
        cost = accepted.cost;
        grad = accepted.gradient;
        let gn = grad.norm();
        records.push(IterationRecord {
            k: k + 1,
            cost,
            grad_norm: gn,
            grad_rel: rel(gn),
            step: accepted.t,
            beta,
            ls_trials: accepted.m,
            wall_ms: elapsed(),
            beta_terms: (g_dot_t, gprev_dot_eta),
            transport_ratio,
            restart: reset,
            orthonormality: problem.orthonormality(&x),
        });
    };
    Ok(Solution {
        point: x,
        cost,
        trace: RunTrace {
            records,
            termination,
        },
    })
}

/// Galerkin cost on `St(n,r)`.
pub struct StiefelProblem<'e, 'a> {
    pub evaluator: &'e Evaluator<'a>,
}

impl Problem for StiefelProblem<'_, '_> {
    type Point = StiefelPoint;
    type Tangent = StiefelTangent;
    type State = CostState;
    type Step = Matrix;

    fn evaluate(&self, x: &StiefelPoint) -> Result<Option<(f64, CostState)>> {
        let red = galerkin_reduce(self.evaluator.system(), x)?;
        Ok(self.evaluator.cost_state(red)?.map(|s| (s.cost, s)))
    }

    fn gradient(&self, x: &StiefelPoint, state: &CostState) -> Result<StiefelTangent> {
        self.evaluator.grad_j1_from(x, state)
    }

    fn retract(&self, x: &StiefelPoint, eta: &StiefelTangent) -> Result<(StiefelPoint, Matrix)> {
        retract_with_factor(x, eta)
    }

    fn transport(&self, to: &StiefelPoint, step: &Matrix, xi: &StiefelTangent) -> Result<StiefelTangent> {
        transport_with_factor(to, step, xi)
    }

    fn orthonormality(&self, x: &StiefelPoint) -> f64 {
        orthonormality_residual(x.matrix())
    }
}

/// Free reduced model on the product manifold.
pub struct ProductProblem<'e, 'a> {
    pub evaluator: &'e Evaluator<'a>,
}

impl Problem for ProductProblem<'_, '_> {
    type Point = ProductPoint;
    type Tangent = ProductTangent;
    type State = CostState;
    type Step = Matrix;

    fn evaluate(&self, x: &ProductPoint) -> Result<Option<(f64, CostState)>> {
        let red = product_reduce(self.evaluator.system(), x)?;
        Ok(self.evaluator.cost_state(red)?.map(|s| (s.cost, s)))
    }

    fn gradient(&self, x: &ProductPoint, state: &CostState) -> Result<ProductTangent> {
        self.evaluator.grad_j2_from(x, state)
    }

    fn retract(&self, x: &ProductPoint, eta: &ProductTangent) -> Result<(ProductPoint, Matrix)> {
        product_retract_with_factor(x, eta)
    }

    fn transport(&self, to: &ProductPoint, step: &Matrix, xi: &ProductTangent) -> Result<ProductTangent> {
        Ok(ProductTangent {
            u: transport_with_factor(&to.u, step, &xi.u)?,
            b: xi.b.clone(),
            c: xi.c.clone(),
            m: xi.m.clone(),
        })
    }

    fn orthonormality(&self, x: &ProductPoint) -> f64 {
        orthonormality_residual(x.u.matrix())
    }
}

/// Result of SRCG or PRCG.
#[derive(Debug, Clone)]
pub struct Reduction<X> {
    pub reduced: LqoSystem,
    pub point: X,
    /// Final shifted cost `‖Σ − Σ̂‖² − ‖Σ‖²`.
    pub cost: f64,
    pub trace: RunTrace,
}

fn initial_unstable(ev: &Evaluator, red: LqoSystem) -> Result<()> {
    match ev.cost_state(red.clone())? {
        Some(_) => Ok(()),
        None => Err(Error::Unstable {
            max_real: crate::linalg::real_schur(red.a())?.max_real_part(),
        }),
    }
}

/// SRCG with a prepared evaluator (reuses its cached full-order data).
pub fn srcg_with(ev: &Evaluator, v0: StiefelPoint, cfg: &OptimizerConfig) -> Result<Reduction<StiefelPoint>> {
    initial_unstable(ev, galerkin_reduce(ev.system(), &v0)?)?;
    let sol = riemannian_cg(&StiefelProblem { evaluator: ev }, v0, cfg)?;
    Ok(Reduction {
        reduced: galerkin_reduce(ev.system(), &sol.point)?,
        point: sol.point,
        cost: sol.cost,
        trace: sol.trace,
    })
}

/// Riemannian conjugate gradient for Galerkin reduction on `St(n,r)`.
pub fn srcg(
    sys: &LqoSystem,
    v0: StiefelPoint,
    cfg: &OptimizerConfig,
    backend: SolverBackend,
) -> Result<Reduction<StiefelPoint>> {
    srcg_with(&Evaluator::new(sys, backend)?, v0, cfg)
}

/// PRCG with a prepared evaluator.
pub fn prcg_with(ev: &Evaluator, p0: ProductPoint, cfg: &OptimizerConfig) -> Result<Reduction<ProductPoint>> {
    initial_unstable(ev, product_reduce(ev.system(), &p0)?)?;
    let sol = riemannian_cg(&ProductProblem { evaluator: ev }, p0, cfg)?;
    Ok(Reduction {
        reduced: product_reduce(ev.system(), &sol.point)?,
        point: sol.point,
        cost: sol.cost,
        trace: sol.trace,
    })
}

/// Riemannian conjugate gradient on the product manifold.
pub fn prcg(
    sys: &LqoSystem,
    p0: ProductPoint,
    cfg: &OptimizerConfig,
    backend: SolverBackend,
) -> Result<Reduction<ProductPoint>> {
    prcg_with(&Evaluator::new(sys, backend)?, p0, cfg)
}
