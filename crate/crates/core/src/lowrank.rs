//! Truncated Laguerre expansions for the `n × r` Sylvester equations of the
//! gradient.
//!
//! With the scaled Laguerre basis, `e^{At} ≈ Σᵢ Aᵢ φᵢ(t)` where
//!
//! ```text
//! A₀ = √(2α)(αI − A)⁻¹,   Aᵢ = (A + αI)(A − αI)⁻¹ Aᵢ₋₁,
//! ```
//!
//! and orthonormality of the `φᵢ` turns the integral solutions into sums:
//! `X ≈ F F̂ᵀ` with `F = [A₀B, …, A_{N−1}B]`, and `K ≈ −G Ĝᵀ` with
//! `G = [A₀ᵀS, …, A_{N−1}ᵀS]`, `S = [Cᵀ, √2·M·F]`. The full-order side needs
//! a single LU factorization of `A − αI`, reused for every block.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, ensure_finite, ensure_square, LuFactor, Matrix};
use crate::lqo::LqoSystem;

/// Truncation length used when none is given.
pub const DEFAULT_TERMS: usize = 32;

thread_local! {
    static FULL_FACTORIZATIONS: Cell<usize> = const { Cell::new(0) };
}

/// Number of full-order `A − αI` factorizations performed on the current thread.
pub fn full_order_factorizations() -> usize {
    FULL_FACTORIZATIONS.with(|c| c.get())
}

/// Time-scale factor `α` and truncation length `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaguerreConfig {
    pub alpha: f64,
    pub terms: usize,
}

impl LaguerreConfig {
    pub fn new(alpha: f64, terms: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        if terms == 0 {
            return Err(Error::InvalidArgument("Laguerre truncation needs N >= 1".into()));
        }
        Ok(LaguerreConfig { alpha, terms })
    }

    /// `α` from [`pick_alpha`] and `N =` [`DEFAULT_TERMS`].
    pub fn for_matrix(a: &Matrix) -> Result<Self> {
        LaguerreConfig::new(pick_alpha(a)?, DEFAULT_TERMS)
    }
}

/// `A` together with a factorization of `A − αI`.
#[derive(Debug, Clone)]
struct ShiftedOperator {
    a: Matrix,
    alpha: f64,
    lu: LuFactor,
}

impl ShiftedOperator {
    fn new(a: &Matrix, alpha: f64) -> Result<Self> {
        ensure_square(a)?;
        ensure_finite(a, "A")?;
        let n = a.nrows();
        let shifted = a - Matrix::identity(n, n) * alpha;
        let lu = LuFactor::new(&shifted)
            .map_err(|_| Error::Singular(format!("A - alpha*I is singular for alpha = {alpha}")))?;
        Ok(ShiftedOperator {
            a: a.clone(),
            alpha,
            lu,
        })
    }

    /// `[A₀Z, …, A_{N−1}Z]`, or the transposed coefficients when `transpose`.
    fn blocks(&self, z: &Matrix, terms: usize, transpose: bool) -> Result<Vec<Matrix>> {
        let n = self.a.nrows();
        if z.nrows() != n {
            return Err(Error::Shape(format!("expected {n} rows, got {}", z.nrows())));
        }
        let solve = |w: &Matrix| {
            if transpose {
                self.lu.solve_transpose(w)
            } else {
                self.lu.solve(w)
            }
        };
        let mut plus = if transpose { self.a.transpose() } else { self.a.clone() };
        for i in 0..n {
            plus[(i, i)] += self.alpha;
        }
        let mut out = Vec::with_capacity(terms);
        out.push(solve(z)? * (-(2.0 * self.alpha).sqrt()));
        for i in 1..terms {
            let next = &plus * solve(&out[i - 1])?;
            out.push(next);
        }
        Ok(out)
    }
}

fn hcat(blocks: &[Matrix], rows: usize) -> Matrix {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (rows, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    out
}

/// `[A₀Z, …, A_{N−1}Z]` computed with one factorization of `A − αI`.
pub fn laguerre_coeff_apply(a: &Matrix, alpha: f64, terms: usize, z: &Matrix) -> Result<Vec<Matrix>> {
    let cfg = LaguerreConfig::new(alpha, terms)?;
    ShiftedOperator::new(a, cfg.alpha)?.blocks(z, cfg.terms, false)
}

/// `S = [Cᵀ, √2·M·F]`.
fn seed(c: &Matrix, m: &Matrix, f: &Matrix) -> Matrix {
    let mf = m * f * std::f64::consts::SQRT_2;
    hcat(&[c.transpose(), mf], c.ncols())
}

/// Full-order factors `F` and `G`, built once per `(system, α, N)`.
#[derive(Debug, Clone)]
pub struct FullOrderFactors {
    config: LaguerreConfig,
    f: Matrix,
    g: Matrix,
}

impl FullOrderFactors {
    pub fn new(sys: &LqoSystem, config: LaguerreConfig) -> Result<Self> {
        let config = LaguerreConfig::new(config.alpha, config.terms)?;
        let op = ShiftedOperator::new(sys.a(), config.alpha)?;
        FULL_FACTORIZATIONS.with(|c| c.set(c.get() + 1));
        let n = sys.order();
        let f = hcat(&op.blocks(sys.b(), config.terms, false)?, n);
        let s = seed(sys.c(), sys.m(), &f);
        let g = hcat(&op.blocks(&s, config.terms, true)?, n);
        Ok(FullOrderFactors { config, f, g })
    }

    pub fn config(&self) -> LaguerreConfig {
        self.config
    }

    /// `n × (N·m)`
    pub fn f(&self) -> &Matrix {
        &self.f
    }

    /// `n × (N·(p + N·m))`
    pub fn g(&self) -> &Matrix {
        &self.g
    }
}

/// Reduced-order factors `F̂` and `Ĝ`, rebuilt for every reduced model.
#[derive(Debug, Clone)]
pub struct ReducedFactors {
    f: Matrix,
    g: Matrix,
}

impl ReducedFactors {
    pub fn new(red: &LqoSystem, config: LaguerreConfig) -> Result<Self> {
        let op = ShiftedOperator::new(red.a(), config.alpha)?;
        let r = red.order();
        let f = hcat(&op.blocks(red.b(), config.terms, false)?, r);
        let s = seed(red.c(), red.m(), &f);
        let g = hcat(&op.blocks(&s, config.terms, true)?, r);
        Ok(ReducedFactors { f, g })
    }

    pub fn f(&self) -> &Matrix {
        &self.f
    }

    pub fn g(&self) -> &Matrix {
        &self.g
    }
}

fn check_pair(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "{what} factors disagree: {} vs {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

/// `X ≈ F F̂ᵀ`, the solution of `AX + XÂᵀ + BB̂ᵀ = 0`.
pub fn approx_x(full: &FullOrderFactors, red: &ReducedFactors) -> Result<Matrix> {
    check_pair(&full.f, &red.f, "X")?;
    Ok(&full.f * red.f.transpose())
}

/// `K ≈ −G Ĝᵀ`, the solution of `AᵀK + KÂ − CᵀĈ − 2MXM̂ = 0` with `X ≈ F F̂ᵀ`.
pub fn approx_k(full: &FullOrderFactors, red: &ReducedFactors) -> Result<Matrix> {
    check_pair(&full.g, &red.g, "K")?;
    Ok(-(&full.g * red.g.transpose()))
}

/// Geometric mean of the smallest and largest eigenvalue real-part magnitudes,
/// clamped to `[1e-3, 1e3]`.
pub fn pick_alpha(a: &Matrix) -> Result<f64> {
    let ev = eigenvalues(a)?;
    if ev.is_empty() {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let max_real = ev.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    if max_real >= 0.0 {
        return Err(Error::Unstable { max_real });
    }
    let lo = ev.iter().map(|e| e.0.abs()).fold(f64::INFINITY, f64::min);
    let hi = ev.iter().map(|e| e.0.abs()).fold(0.0, f64::max);
    Ok((lo * hi).sqrt().clamp(1e-3, 1e3))
}
