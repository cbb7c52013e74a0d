//! Linear systems with quadratic outputs
//!
//! ```text
//! x' = A x + B u,     y = C x + xᵀ M x
//! ```
//!
//! together with their Gramians, H2 norm, error systems and time-domain
//! simulation.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{
    ensure_finite, ensure_shape, ensure_square, norm2, real_schur, solve_lyapunov,
    solve_sylvester_schur, symmetrize_in_place, Matrix, STABILITY_MARGIN,
};

/// State-space quadruple `(A, B, C, M)` with scalar output and symmetric `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqoSystem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    m: Matrix,
}

impl LqoSystem {
    /// Validates dimensions and finiteness; `M` is replaced by its symmetric part.
    pub fn new(a: Matrix, b: Matrix, c: Matrix, mut m: Matrix) -> Result<Self> {
        ensure_square(&a)?;
        let n = a.nrows();
        ensure_shape(&b, n, b.ncols(), "B")?;
        ensure_shape(&c, 1, n, "C")?;
        ensure_shape(&m, n, n, "M")?;
        for (mat, name) in [(&a, "A"), (&b, "B"), (&c, "C"), (&m, "M")] {
            ensure_finite(mat, name)?;
        }
        symmetrize_in_place(&mut m);
        Ok(LqoSystem { a, b, c, m })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn m(&self) -> &Matrix {
        &self.m
    }

    /// Applies the state transformation `x ↦ T x` for orthogonal `T`.
    pub fn transformed(&self, t: &Matrix) -> Result<Self> {
        ensure_shape(t, self.order(), self.order(), "T")?;
        let tt = t.transpose();
        LqoSystem::new(
            t * &self.a * &tt,
            t * &self.b,
            &self.c * &tt,
            t * &self.m * &tt,
        )
    }

    pub fn is_stable(&self) -> Result<bool> {
        crate::linalg::is_stable_default(&self.a)
    }

    /// Output `y = C x + xᵀ M x` for one state.
    pub fn output(&self, x: &DVector<f64>) -> f64 {
        let lin = (&self.c * x)[0];
        let quad = x.dot(&(&self.m * x));
        lin + quad
    }
}

/// Controllability and observability Gramians.
#[derive(Debug, Clone)]
pub struct GramianPair {
    pub p: Matrix,
    pub q: Matrix,
}

fn check_stable(a: &Matrix) -> Result<()> {
    if a.nrows() == 0 {
        return Ok(());
    }
    let max_real = real_schur(a)?.max_real_part();
    if max_real >= -STABILITY_MARGIN * norm2(a) {
        return Err(Error::Unstable { max_real });
    }
    Ok(())
}

/// Solves `A P + P Aᵀ + B Bᵀ = 0`.
pub fn controllability_gramian(sys: &LqoSystem) -> Result<Matrix> {
    solve_lyapunov(&sys.a, &(&sys.b * sys.b.transpose()))
}

/// Solves `Aᵀ Q + Q A + Cᵀ C + M P M = 0` given the controllability Gramian.
pub fn observability_gramian_with(sys: &LqoSystem, p: &Matrix) -> Result<Matrix> {
    let w = sys.c.transpose() * &sys.c + &sys.m * p * &sys.m;
    solve_lyapunov(&sys.a.transpose(), &w)
}

pub fn observability_gramian(sys: &LqoSystem) -> Result<Matrix> {
    let p = controllability_gramian(sys)?;
    observability_gramian_with(sys, &p)
}

pub fn gramians(sys: &LqoSystem) -> Result<GramianPair> {
    let p = controllability_gramian(sys)?;
    let q = observability_gramian_with(sys, &p)?;
    Ok(GramianPair { p, q })
}

/// `tr(Bᵀ Q B)`, the squared H2 norm.
pub fn h2_norm_squared(sys: &LqoSystem) -> Result<f64> {
    let q = observability_gramian(sys)?;
    Ok((sys.b.transpose() * q * &sys.b).trace())
}

/// H2 norm `√tr(Bᵀ Q B)`; unstable systems are rejected since their norm is infinite.
pub fn h2_norm(sys: &LqoSystem) -> Result<f64> {
    Ok(h2_norm_squared(sys)?.max(0.0).sqrt())
}

/// Error system `Σ − Σ̂` of order `n + r`.
pub fn error_system(full: &LqoSystem, red: &LqoSystem) -> Result<LqoSystem> {
    if full.inputs() != red.inputs() {
        return Err(Error::Shape(format!(
            "input count mismatch: {} vs {}",
            full.inputs(),
            red.inputs()
        )));
    }
    let (n, r, m) = (full.order(), red.order(), full.inputs());
    let mut a = Matrix::zeros(n + r, n + r);
    a.view_mut((0, 0), (n, n)).copy_from(&full.a);
    a.view_mut((n, n), (r, r)).copy_from(&red.a);
    let mut b = Matrix::zeros(n + r, m);
    b.view_mut((0, 0), (n, m)).copy_from(&full.b);
    b.view_mut((n, 0), (r, m)).copy_from(&red.b);
    let mut c = Matrix::zeros(1, n + r);
    c.view_mut((0, 0), (1, n)).copy_from(&full.c);
    c.view_mut((0, n), (1, r)).copy_from(&(-&red.c));
    let mut mm = Matrix::zeros(n + r, n + r);
    mm.view_mut((0, 0), (n, n)).copy_from(&full.m);
    mm.view_mut((n, n), (r, r)).copy_from(&(-&red.m));
    LqoSystem::new(a, b, c, mm)
}

/// Blocks of the error-system Gramians and the squared H2 error they assemble.
#[derive(Debug, Clone)]
pub struct H2ErrorBlocks {
    /// `‖Σ − Σ̂‖²`
    pub j: f64,
    /// `tr(Bᵀ Q B)`, the part of `j` that depends on the full model only.
    pub constant: f64,
    pub x: Matrix,
    pub p_hat: Matrix,
    pub y: Matrix,
    pub q_hat: Matrix,
}

/// Squared H2 error through the cross Gramians `X, P̂, Y, Q̂`.
///
/// Fails with [`Error::Unstable`] when either model is unstable; see
/// [`squared_h2_error`] for the variant mapping that case to `+∞`.
pub fn h2_error_blocks(full: &LqoSystem, red: &LqoSystem) -> Result<H2ErrorBlocks> {
    let q = observability_gramian(full)?;
    h2_error_blocks_with(full, red, &q)
}

/// As [`h2_error_blocks`] with a precomputed observability Gramian of the full model.
pub fn h2_error_blocks_with(full: &LqoSystem, red: &LqoSystem, q: &Matrix) -> Result<H2ErrorBlocks> {
    if full.inputs() != red.inputs() {
        return Err(Error::Shape("input count mismatch".into()));
    }
    check_stable(&full.a)?;
    check_stable(&red.a)?;
    let s_a = real_schur(&full.a)?;
    let s_at = real_schur(&full.a.transpose())?;
    let s_ah = real_schur(&red.a)?;
    let s_aht = real_schur(&red.a.transpose())?;

    let x = solve_sylvester_schur(&s_a, &s_aht, &(&full.b * red.b.transpose()))?;
    let mut p_hat = solve_sylvester_schur(&s_ah, &s_aht, &(&red.b * red.b.transpose()))?;
    symmetrize_in_place(&mut p_hat);
    let y_rhs = -(full.c.transpose() * &red.c) - &full.m * &x * &red.m;
    let y = solve_sylvester_schur(&s_at, &s_ah, &y_rhs)?;
    let q_rhs = red.c.transpose() * &red.c + &red.m * &p_hat * &red.m;
    let mut q_hat = solve_sylvester_schur(&s_aht, &s_ah, &q_rhs)?;
    symmetrize_in_place(&mut q_hat);

    let constant = (full.b.transpose() * q * &full.b).trace();
    let cross = (full.b.transpose() * &y * &red.b).trace();
    let red_part = (red.b.transpose() * &q_hat * &red.b).trace();
    Ok(H2ErrorBlocks {
        j: constant + 2.0 * cross + red_part,
        constant,
        x,
        p_hat,
        y,
        q_hat,
    })
}

/// `‖Σ − Σ̂‖²`, or `+∞` when the reduced model is unstable.
pub fn squared_h2_error(full: &LqoSystem, red: &LqoSystem) -> Result<f64> {
    match h2_error_blocks(full, red) {
        Ok(b) => Ok(b.j),
        Err(Error::Unstable { .. }) if check_stable(&full.a).is_ok() => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// `‖Σ − Σ̂‖ / ‖Σ‖`.
pub fn relative_h2_error(full: &LqoSystem, red: &LqoSystem) -> Result<f64> {
    let blocks = match h2_error_blocks(full, red) {
        Ok(b) => b,
        Err(Error::Unstable { .. }) if check_stable(&full.a).is_ok() => {
            return Ok(f64::INFINITY)
        }
        Err(e) => return Err(e),
    };
    Ok((blocks.j.max(0.0) / blocks.constant).sqrt())
}

/// State trajectory and output samples on a uniform grid.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub times: Vec<f64>,
    /// `n × (steps + 1)`; column `k` is the state at `times[k]`.
    pub states: Matrix,
    pub outputs: Vec<f64>,
}

/// `A` for repeated products: compressed rows when at most a quarter of the
/// entries are nonzero (discretized PDEs), the dense matrix otherwise.
enum StateOperator<'a> {
    Dense(&'a Matrix),
    Sparse {
        row_ptr: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    },
}

impl<'a> StateOperator<'a> {
    fn new(a: &'a Matrix) -> Self {
        let nnz = a.iter().filter(|v| **v != 0.0).count();
        if 4 * nnz > a.len() {
            return StateOperator::Dense(a);
        }
        let mut row_ptr = Vec::with_capacity(a.nrows() + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    cols.push(j);
                    vals.push(a[(i, j)]);
                }
            }
            row_ptr.push(cols.len());
        }
        StateOperator::Sparse { row_ptr, cols, vals }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            StateOperator::Dense(a) => *a * x,
            StateOperator::Sparse { row_ptr, cols, vals } => DVector::from_fn(row_ptr.len() - 1, |i, _| {
                (row_ptr[i]..row_ptr[i + 1]).map(|k| vals[k] * x[cols[k]]).sum()
            }),
        }
    }
}

/// Number of RK4 substeps per grid interval keeping `h·‖A‖∞` inside the
/// stability region of the classical scheme.
fn rk4_substeps(a: &Matrix, h: f64) -> usize {
    let norm_inf = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    ((h * norm_inf / 2.0).ceil() as usize).max(1)
}

/// Classical RK4 from the zero state with the output sampled at
/// `t_k = k·t_end/steps`, `k = 0..=steps`.
///
/// The input `u(t)` returns one value per input channel. Stiff systems are
/// integrated with extra internal substeps; outputs stay on the uniform grid.
pub fn simulate_with<F>(sys: &LqoSystem, u: F, t_end: f64, steps: usize) -> Result<Simulation>
where
    F: Fn(f64) -> DVector<f64>,
{
    if steps < 2 {
        return Err(Error::InvalidArgument("simulation needs at least 2 steps".into()));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid end time {t_end}")));
    }
    let (n, m) = (sys.order(), sys.inputs());
    let h = t_end / steps as f64;
    let sub = rk4_substeps(&sys.a, h);
    let hs = h / sub as f64;

    let input = |t: f64| -> Result<DVector<f64>> {
        let v = u(t);
        if v.len() != m {
            return Err(Error::Shape(format!("input has {} channels, expected {m}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("input sample at t = {t}")));
        }
        Ok(v)
    };
    let op = StateOperator::new(&sys.a);
    let rhs = |x: &DVector<f64>, t: f64| -> Result<DVector<f64>> {
        Ok(op.apply(x) + &sys.b * input(t)?)
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Matrix::zeros(n, steps + 1);
    let mut x = DVector::zeros(n);
    times.push(0.0);
    input(0.0)?;
    for k in 0..steps {
        let t0 = k as f64 * h;
        for s in 0..sub {
            let t = t0 + s as f64 * hs;
            let k1 = rhs(&x, t)?;
            let k2 = rhs(&(&x + &k1 * (0.5 * hs)), t + 0.5 * hs)?;
            let k3 = rhs(&(&x + &k2 * (0.5 * hs)), t + 0.5 * hs)?;
            let k4 = rhs(&(&x + &k3 * hs), t + hs)?;
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (hs / 6.0);
        }
        times.push((k + 1) as f64 * h);
        states.set_column(k + 1, &x);
    }
    let outputs = (0..=steps)
        .map(|k| sys.output(&states.column(k).into_owned()))
        .collect();
    Ok(Simulation {
        times,
        states,
        outputs,
    })
}

/// [`simulate_with`] for a scalar signal applied to every input channel.
pub fn simulate<F>(sys: &LqoSystem, u: F, t_end: f64, steps: usize) -> Result<Simulation>
where
    F: Fn(f64) -> f64,
{
    let m = sys.inputs();
    simulate_with(sys, |t| DVector::from_element(m, u(t)), t_end, steps)
}
