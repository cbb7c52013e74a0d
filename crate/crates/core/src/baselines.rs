//! Initial bases and comparison methods: Arnoldi and rational Krylov
//! subspaces, POD from state snapshots, and square-root balanced truncation
//! with the quadratic-output observability Gramian.

use nalgebra::{DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ensure_square, svd, symmetrize_in_place, LuFactor, Matrix};
use crate::lqo::{gramians, LqoSystem, Simulation};
use crate::stiefel::StiefelPoint;

/// Relative size below which an orthogonalized Krylov vector counts as dependent.
///
/// Deliberately at rounding level: rational Krylov vectors of diffusion
/// problems lose several digits of independence per shift, and such vectors
/// still carry (deterministic) directions.
const BREAKDOWN_TOL: f64 = 8.0 * f64::EPSILON;

/// Orthogonalizes `w` against the first `k` columns of `basis` (two passes of
/// modified Gram–Schmidt) and returns the remaining norm relative to `‖w‖`.
fn orthogonalize(basis: &Matrix, k: usize, w: &mut DVector<f64>) -> (f64, f64) {
    let start = w.norm();
    for _ in 0..2 {
        for j in 0..k {
            let q = basis.column(j);
            let h = q.dot(w);
            w.axpy(-h, &q, 1.0);
        }
    }
    let left = w.norm();
    (left, if start > 0.0 { left / start } else { 0.0 })
}

/// Orthonormal basis of `K_r(A, B) = span{B, AB, …, A^{r−1}B}` (first `r`
/// columns of the block Krylov sequence).
pub fn arnoldi_basis(a: &Matrix, b: &Matrix, r: usize) -> Result<StiefelPoint> {
    ensure_square(a)?;
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    let n = a.nrows();
    if b.nrows() != n || b.ncols() == 0 {
        return Err(Error::Shape("B must have as many rows as A and at least one column".into()));
    }
    if r == 0 || r > n {
        return Err(Error::InvalidArgument(format!("need 1 <= r <= n, got r = {r}")));
    }
    let m = b.ncols();
    let mut basis = Matrix::zeros(n, r);
    let mut k = 0;
    let mut source = 0;
    while k < r {
        let mut w: DVector<f64> = if source < m {
            b.column(source).into_owned()
        } else if source - m < k {
            a * basis.column(source - m)
        } else {
            return Err(Error::Breakdown { achieved: k, requested: r });
        };
        source += 1;
        let (left, ratio) = orthogonalize(&basis, k, &mut w);
        if ratio <= BREAKDOWN_TOL || left == 0.0 {
            continue;
        }
        basis.set_column(k, &(w / left));
        k += 1;
    }
    StiefelPoint::new(basis)
}

/// Orthonormalized `[(s₁I − A)⁻¹B, …, (s_kI − A)⁻¹B]`.
pub fn rational_krylov_basis(a: &Matrix, b: &Matrix, shifts: &[f64]) -> Result<StiefelPoint> {
    ensure_square(a)?;
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    let n = a.nrows();
    if b.nrows() != n || b.ncols() == 0 {
        return Err(Error::Shape("B must have as many rows as A and at least one column".into()));
    }
    let m = b.ncols();
    let cols = shifts.len() * m;
    if shifts.is_empty() || cols > n {
        return Err(Error::InvalidArgument(format!(
            "need between 1 and {} shifts, got {}",
            n / m,
            shifts.len()
        )));
    }
    for (i, &s) in shifts.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::InvalidArgument(format!("shift {s} is not finite")));
        }
        if shifts[..i].contains(&s) {
            return Err(Error::RankDeficient {
                index: i * m,
                value: 0.0,
                threshold: BREAKDOWN_TOL,
            });
        }
    }
    let mut basis = Matrix::zeros(n, cols);
    let mut k = 0;
    for &s in shifts {
        let shifted = Matrix::identity(n, n) * s - a;
        let lu = LuFactor::new(&shifted).map_err(|_| Error::Singular(format!("shift {s} is an eigenvalue of A")))?;
        let solved = lu.solve(b)?;
        for j in 0..m {
            let mut w = solved.column(j).into_owned();
            let (left, ratio) = orthogonalize(&basis, k, &mut w);
            if ratio <= BREAKDOWN_TOL || left == 0.0 {
                return Err(Error::RankDeficient {
                    index: k,
                    value: ratio,
                    threshold: BREAKDOWN_TOL,
                });
            }
            basis.set_column(k, &(w / left));
            k += 1;
        }
    }
    StiefelPoint::new(basis)
}

/// States sampled on a uniform grid, with a description of the input that generated them.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub times: Vec<f64>,
    /// `n × s`
    pub states: Matrix,
    pub input: String,
}

impl SnapshotSet {
    pub fn new(times: Vec<f64>, states: Matrix, input: impl Into<String>) -> Result<Self> {
        if times.len() != states.ncols() {
            return Err(Error::Shape(format!(
                "{} sample times for {} snapshots",
                times.len(),
                states.ncols()
            )));
        }
        ensure_finite(&states, "snapshots")?;
        Ok(SnapshotSet {
            times,
            states,
            input: input.into(),
        })
    }

    pub fn from_simulation(sim: Simulation, input: impl Into<String>) -> Result<Self> {
        SnapshotSet::new(sim.times, sim.states, input)
    }
}

/// First `r` left singular vectors of the snapshot matrix.
pub fn pod_basis(snap: &SnapshotSet, r: usize) -> Result<StiefelPoint> {
    let (n, s) = snap.states.shape();
    if r == 0 || r > n || r > s {
        return Err(Error::InvalidArgument(format!(
            "POD rank {r} needs at most {} states and {s} snapshots",
            n
        )));
    }
    let dec = svd(&snap.states)?;
    let (u, sv) = (dec.u, dec.s);
    let threshold = 1e-12 * sv[0];
    if !(sv[r - 1] > threshold) {
        return Err(Error::RankDeficient {
            index: r - 1,
            value: sv[r - 1],
            threshold,
        });
    }
    StiefelPoint::new(u.columns(0, r).into_owned())
}

/// `L` with `L Lᵀ = S` for symmetric positive semidefinite `S`, dropping
/// eigenvalues below `1e-14·λ_max`.
fn psd_factor(s: &Matrix) -> Result<Matrix> {
    let mut s = s.clone();
    symmetrize_in_place(&mut s);
    let eig = SymmetricEigen::new(s);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = {
        let mut idx: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > 1e-14 * lmax)
            .collect();
        idx.sort_by(|&i, &j| {
            eig.eigenvalues[j]
                .partial_cmp(&eig.eigenvalues[i])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        idx
    };
    let n = eig.eigenvectors.nrows();
    let mut l = Matrix::zeros(n, keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        l.set_column(dst, &(eig.eigenvectors.column(src) * eig.eigenvalues[src].sqrt()));
    }
    Ok(l)
}

/// Balanced truncation result.
#[derive(Debug, Clone)]
pub struct BalancedTruncation {
    pub reduced: LqoSystem,
    /// Left projector `W` (`n × r`), with `WᵀV = I`.
    pub w: Matrix,
    /// Right projector `V` (`n × r`).
    pub v: Matrix,
    /// Hankel singular values, decreasing.
    pub hankel: Vec<f64>,
    /// Order requested when it had to be lowered because of negligible Hankel values.
    pub truncated_from: Option<usize>,
}

/// Square-root balanced truncation using `P` and the quadratic-output `Q`.
pub fn bt_reduce(sys: &LqoSystem, r: usize) -> Result<BalancedTruncation> {
    if r == 0 || r > sys.order() {
        return Err(Error::InvalidArgument(format!("need 1 <= r <= n, got r = {r}")));
    }
    let g = gramians(sys)?;
    let lp = psd_factor(&g.p)?;
    let lq = psd_factor(&g.q)?;
    let dec = svd(&(lq.transpose() * &lp))?;
    let (z, s, y) = (dec.u, dec.s, dec.v);
    if s.is_empty() || s[0] == 0.0 {
        return Err(Error::RankDeficient {
            index: 0,
            value: 0.0,
            threshold: 0.0,
        });
    }
    let usable = s.iter().take_while(|&&v| v >= 1e-14 * s[0]).count();
    let (order, truncated_from) = if usable < r { (usable, Some(r)) } else { (r, None) };
    let scale = Matrix::from_diagonal(&DVector::from_iterator(order, s[..order].iter().map(|v| 1.0 / v.sqrt())));
    let w = &lq * z.columns(0, order) * &scale;
    let v = &lp * y.columns(0, order) * &scale;
    let wt = w.transpose();
    let reduced = LqoSystem::new(&wt * sys.a() * &v, &wt * sys.b(), sys.c() * &v, v.transpose() * sys.m() * &v)?;
    Ok(BalancedTruncation {
        reduced,
        w,
        v,
        hankel: s,
        truncated_from,
    })
}
