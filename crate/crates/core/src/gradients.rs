//! Shifted H2 cost and Riemannian gradients for Galerkin reduction on
//! `St(n,r)` and for free reduced models on the product manifold.
//!
//! Both costs drop the constant `tr(BᵀQB)`. Writing the cross terms through
//! the controllability side gives an expression in `X` and `P̂` only:
//!
//! ```text
//! J − tr(BᵀQB) = −2 tr(C X Ĉᵀ) + tr(Ĉ P̂ Ĉᵀ) − 2 tr(XᵀMX M̂) + tr(P̂M̂P̂M̂),
//! ```
//!
//! so a cost evaluation needs two Sylvester solves and the gradient two more
//! (`K` and `L`).

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{
    ensure_shape, norm2, real_schur, solve_sylvester_schur, sym, symmetrize_in_place, Matrix,
    SchurForm, STABILITY_MARGIN,
};
use crate::lowrank::{approx_k, approx_x, FullOrderFactors, LaguerreConfig, ReducedFactors};
use crate::lqo::{h2_norm_squared, LqoSystem};
use crate::stiefel::{project_tangent, ProductPoint, ProductTangent, StiefelPoint, StiefelTangent};

/// How the two order-`n × r` Sylvester equations are solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverBackend {
    Exact,
    Laguerre(LaguerreConfig),
}

/// Solutions of the Sylvester equations behind the cost and gradient.
#[derive(Debug, Clone)]
pub struct GradientWorkspace {
    /// `AX + XÂᵀ + BB̂ᵀ = 0`
    pub x: Matrix,
    /// `ÂP̂ + P̂Âᵀ + B̂B̂ᵀ = 0`
    pub p_hat: Matrix,
    /// `AᵀK + KÂ − CᵀĈ − 2MXM̂ = 0`
    pub k: Matrix,
    /// `ÂᵀL + LÂ + ĈᵀĈ + 2M̂P̂M̂ = 0`
    pub l: Matrix,
    /// `AᵀY + YÂ − CᵀĈ − MXM̂ = 0`
    pub y: Option<Matrix>,
    /// `ÂᵀQ̂ + Q̂Â + ĈᵀĈ + M̂P̂M̂ = 0`
    pub q_hat: Option<Matrix>,
}

/// `Â = VᵀAV, B̂ = VᵀB, Ĉ = CV, M̂ = VᵀMV`.
pub fn galerkin_reduce(sys: &LqoSystem, v: &StiefelPoint) -> Result<LqoSystem> {
    let vm = v.matrix();
    ensure_shape(vm, sys.order(), v.r(), "V")?;
    let vt = vm.transpose();
    LqoSystem::new(&vt * sys.a() * vm, &vt * sys.b(), sys.c() * vm, &vt * sys.m() * vm)
}

/// Product-manifold point `(V, VᵀB, CV, VᵀMV)` carrying the same reduced model as `V`.
pub fn galerkin_embedding(sys: &LqoSystem, v: &StiefelPoint) -> Result<ProductPoint> {
    let red = galerkin_reduce(sys, v)?;
    ProductPoint::new(v.clone(), red.b().clone(), red.c().clone(), red.m().clone())
}

/// Reduced model `(UᵀAU, B̂, Ĉ, M̂)` of a product-manifold point.
pub fn product_reduce(sys: &LqoSystem, p: &ProductPoint) -> Result<LqoSystem> {
    let u = p.u.matrix();
    ensure_shape(u, sys.order(), p.r(), "U")?;
    if p.b.ncols() != sys.inputs() {
        return Err(Error::Shape("B̂ input count mismatch".into()));
    }
    LqoSystem::new(u.transpose() * sys.a() * u, p.b.clone(), p.c.clone(), p.m.clone())
}

enum FullSolver {
    Exact,
    Laguerre(Box<FullOrderFactors>),
}

/// Cost and gradient evaluator for one full model, caching everything that
/// depends on the full model only: the Schur forms of `A` and `Aᵀ`, or the
/// Laguerre factors, and the constant `tr(BᵀQB)`.
pub struct Evaluator<'a> {
    sys: &'a LqoSystem,
    backend: SolverBackend,
    schur_a: SchurForm,
    schur_at: SchurForm,
    full: FullSolver,
    constant: OnceLock<f64>,
}

/// Reduced-side state after a cost evaluation; completing it yields the gradient.
#[derive(Debug, Clone)]
pub struct CostState {
    pub red: LqoSystem,
    pub cost: f64,
    pub x: Matrix,
    pub p_hat: Matrix,
    schur_ah: SchurForm,
    schur_aht: SchurForm,
    reduced_factors: Option<ReducedFactors>,
}

impl<'a> Evaluator<'a> {
    pub fn new(sys: &'a LqoSystem, backend: SolverBackend) -> Result<Self> {
        let schur_a = real_schur(sys.a())?;
        let margin = STABILITY_MARGIN * norm2(sys.a());
        let max_real = schur_a.max_real_part();
        if sys.order() > 0 && max_real >= -margin {
            return Err(Error::Unstable { max_real });
        }
        let schur_at = real_schur(&sys.a().transpose())?;
        let full = match backend {
            SolverBackend::Exact => FullSolver::Exact,
            SolverBackend::Laguerre(cfg) => FullSolver::Laguerre(Box::new(FullOrderFactors::new(sys, cfg)?)),
        };
        Ok(Evaluator {
            sys,
            backend,
            schur_a,
            schur_at,
            full,
            constant: OnceLock::new(),
        })
    }

    pub fn system(&self) -> &LqoSystem {
        self.sys
    }

    pub fn backend(&self) -> SolverBackend {
        self.backend
    }

    /// `tr(BᵀQB) = ‖Σ‖²`, computed on first use.
    pub fn constant(&self) -> Result<f64> {
        if let Some(c) = self.constant.get() {
            return Ok(*c);
        }
        let c = h2_norm_squared(self.sys)?;
        Ok(*self.constant.get_or_init(|| c))
    }

    /// Solves for `X` and `P̂` and evaluates the shifted cost.
    ///
    /// Returns `Ok(None)` when `Â` is unstable, which callers treat as `+∞`.
    pub fn cost_state(&self, red: LqoSystem) -> Result<Option<CostState>> {
        if red.inputs() != self.sys.inputs() || red.c().nrows() != self.sys.c().nrows() {
            return Err(Error::Shape("reduced model does not match the full model's inputs/outputs".into()));
        }
        let schur_ah = real_schur(red.a())?;
        let margin = STABILITY_MARGIN * norm2(red.a()).max(f64::MIN_POSITIVE);
        if red.order() > 0 && schur_ah.max_real_part() >= -margin {
            return Ok(None);
        }
        let schur_aht = real_schur(&red.a().transpose())?;
        let (b, bh) = (self.sys.b(), red.b());
        let mut p_hat = solve_sylvester_schur(&schur_ah, &schur_aht, &(bh * bh.transpose()))?;
        symmetrize_in_place(&mut p_hat);
        let (x, reduced_factors) = match &self.full {
            FullSolver::Exact => (
                solve_sylvester_schur(&self.schur_a, &schur_aht, &(b * bh.transpose()))?,
                None,
            ),
            FullSolver::Laguerre(full) => {
                let rf = ReducedFactors::new(&red, full.config())?;
                (approx_x(full, &rf)?, Some(rf))
            }
        };
        let cost = shifted_cost(self.sys, &red, &x, &p_hat);
        Ok(Some(CostState {
            red,
            cost,
            x,
            p_hat,
            schur_ah,
            schur_aht,
            reduced_factors,
        }))
    }

    /// Adds `K` and `L` (and optionally `Y`, `Q̂`) to a cost state.
    pub fn workspace(&self, state: &CostState, with_cost_blocks: bool) -> Result<GradientWorkspace> {
        let sys = self.sys;
        let red = &state.red;
        let (c, ch) = (sys.c(), red.c());
        let (m, mh) = (sys.m(), red.m());
        let mxm = m * &state.x * mh;
        let k = match (&self.full, &state.reduced_factors) {
            (FullSolver::Laguerre(full), Some(rf)) => approx_k(full, rf)?,
            _ => {
                let rhs = -(c.transpose() * ch) - &mxm * 2.0;
                solve_sylvester_schur(&self.schur_at, &state.schur_ah, &rhs)?
            }
        };
        let mpm = mh * &state.p_hat * mh;
        let chc = ch.transpose() * ch;
        let mut l = solve_sylvester_schur(&state.schur_aht, &state.schur_ah, &(&chc + &mpm * 2.0))?;
        symmetrize_in_place(&mut l);
        let (y, q_hat) = if with_cost_blocks {
            let y_rhs = -(c.transpose() * ch) - &mxm;
            let y = solve_sylvester_schur(&self.schur_at, &state.schur_ah, &y_rhs)?;
            let mut q_hat = solve_sylvester_schur(&state.schur_aht, &state.schur_ah, &(&chc + &mpm))?;
            symmetrize_in_place(&mut q_hat);
            (Some(y), Some(q_hat))
        } else {
            (None, None)
        };
        Ok(GradientWorkspace {
            x: state.x.clone(),
            p_hat: state.p_hat.clone(),
            k,
            l,
            y,
            q_hat,
        })
    }

    /// Shifted cost of the Galerkin model of `V`; `+∞` when it is unstable.
    pub fn cost_j1(&self, v: &StiefelPoint) -> Result<f64> {
        Ok(self
            .cost_state(galerkin_reduce(self.sys, v)?)?
            .map_or(f64::INFINITY, |s| s.cost))
    }

    /// Shifted cost of a product-manifold point; `+∞` when `UᵀAU` is unstable.
    pub fn cost_j2(&self, p: &ProductPoint) -> Result<f64> {
        Ok(self
            .cost_state(product_reduce(self.sys, p)?)?
            .map_or(f64::INFINITY, |s| s.cost))
    }

    /// Riemannian gradient of the Galerkin cost at `V` from a completed cost state.
    pub fn grad_j1_from(&self, v: &StiefelPoint, state: &CostState) -> Result<StiefelTangent> {
        let ws = self.workspace(state, false)?;
        let (a, b, c, m) = (self.sys.a(), self.sys.b(), self.sys.c(), self.sys.m());
        let red = &state.red;
        let vm = v.matrix();
        let w = ws.x.transpose() * &ws.k + &ws.p_hat * &ws.l;
        let mut d = a.transpose() * vm * w.transpose() + a * vm * &w;
        d += b * (red.b().transpose() * &ws.l + b.transpose() * &ws.k);
        d += c.transpose() * (red.c() * &ws.p_hat - c * &ws.x);
        let core = &ws.p_hat * red.m() * &ws.p_hat - ws.x.transpose() * m * &ws.x;
        d += m * vm * core * 2.0;
        project_tangent(v, &(d * 2.0))
    }

    /// Riemannian gradient on the product manifold from a completed cost state.
    pub fn grad_j2_from(&self, p: &ProductPoint, state: &CostState) -> Result<ProductTangent> {
        let ws = self.workspace(state, false)?;
        let (a, b, c, m) = (self.sys.a(), self.sys.b(), self.sys.c(), self.sys.m());
        let u = p.u.matrix();
        let w = ws.x.transpose() * &ws.k + &ws.p_hat * &ws.l;
        let du = (a.transpose() * u * w.transpose() + a * u * &w) * 2.0;
        let db = (ws.k.transpose() * b + &ws.l * &p.b) * 2.0;
        let dc = (&p.c * &ws.p_hat - c * &ws.x) * 2.0;
        let dm = sym(&(&ws.p_hat * &p.m * &ws.p_hat - ws.x.transpose() * m * &ws.x)) * 2.0;
        Ok(ProductTangent {
            u: project_tangent(&p.u, &du)?,
            b: db,
            c: dc,
            m: dm,
        })
    }

    pub fn riem_grad_j1(&self, v: &StiefelPoint) -> Result<StiefelTangent> {
        let state = self.stable_state(galerkin_reduce(self.sys, v)?)?;
        self.grad_j1_from(v, &state)
    }

    pub fn riem_grad_j2(&self, p: &ProductPoint) -> Result<ProductTangent> {
        let state = self.stable_state(product_reduce(self.sys, p)?)?;
        self.grad_j2_from(p, &state)
    }

    fn stable_state(&self, red: LqoSystem) -> Result<CostState> {
        let max_real = real_schur(red.a())?.max_real_part();
        self.cost_state(red)?.ok_or(Error::Unstable { max_real })
    }
}

/// `−2 tr(CXĈᵀ) + tr(ĈP̂Ĉᵀ) − 2 tr(XᵀMXM̂) + tr(P̂M̂P̂M̂)`.
fn shifted_cost(sys: &LqoSystem, red: &LqoSystem, x: &Matrix, p_hat: &Matrix) -> f64 {
    let (c, ch) = (sys.c(), red.c());
    let mh = red.m();
    let cross = (c * x * ch.transpose()).trace();
    let own = (ch * p_hat * ch.transpose()).trace();
    let quad_cross = (x.transpose() * sys.m() * x * mh).trace();
    let pm = p_hat * mh;
    let quad_own = (&pm * &pm).trace();
    -2.0 * cross + own - 2.0 * quad_cross + quad_own
}

/// Shifted Galerkin cost `J₁(V) − tr(BᵀQB)`.
pub fn cost_j1(sys: &LqoSystem, v: &StiefelPoint, backend: SolverBackend) -> Result<f64> {
    Evaluator::new(sys, backend)?.cost_j1(v)
}

pub fn riem_grad_j1(sys: &LqoSystem, v: &StiefelPoint, backend: SolverBackend) -> Result<StiefelTangent> {
    Evaluator::new(sys, backend)?.riem_grad_j1(v)
}

/// Shifted product-manifold cost `J₂(U, B̂, Ĉ, M̂) − tr(BᵀQB)`.
pub fn cost_j2(sys: &LqoSystem, p: &ProductPoint, backend: SolverBackend) -> Result<f64> {
    Evaluator::new(sys, backend)?.cost_j2(p)
}

pub fn riem_grad_j2(sys: &LqoSystem, p: &ProductPoint, backend: SolverBackend) -> Result<ProductTangent> {
    Evaluator::new(sys, backend)?.riem_grad_j2(p)
}

/// `X, P̂, K, L` (and `Y, Q̂`) for a pair of stable models.
pub fn solve_workspace(
    sys: &LqoSystem,
    red: &LqoSystem,
    backend: SolverBackend,
    with_cost_blocks: bool,
) -> Result<GradientWorkspace> {
    let ev = Evaluator::new(sys, backend)?;
    let state = ev.stable_state(red.clone())?;
    ev.workspace(&state, with_cost_blocks)
}
