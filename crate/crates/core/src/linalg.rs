//! Dense kernels shared by the rest of the crate.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. The Sylvester and
//! Lyapunov solvers follow the Bartels–Stewart scheme: both coefficients are
//! brought to real Schur form and the transformed equation is solved by
//! back-substitution over the 1×1 and 2×2 diagonal blocks, so the whole
//! computation stays in real arithmetic.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;

/// Default stability margin, relative to the spectral norm of the tested matrix.
pub const STABILITY_MARGIN: f64 = 1e-10;

const SCHUR_MAX_SWEEPS_PER_DIM: usize = 200;

/// Rejects matrices holding NaN or infinite entries.
pub fn ensure_finite(m: &Matrix, name: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

pub(crate) fn ensure_square(m: &Matrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

pub(crate) fn ensure_shape(m: &Matrix, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.nrows() == rows && m.ncols() == cols {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "{what}: expected {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Symmetric part `(Z + Zᵀ)/2`.
pub fn sym(z: &Matrix) -> Matrix {
    (z + z.transpose()) * 0.5
}

/// Overwrites `z` with its symmetric part; the result is bitwise symmetric.
pub fn symmetrize_in_place(z: &mut Matrix) {
    let n = z.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (z[(i, j)] + z[(j, i)]);
            z[(i, j)] = v;
            z[(j, i)] = v;
        }
    }
}

/// Trace inner product `tr(Bᵀ A)`.
pub fn inner(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Spectral norm, `√λ_max(AᵀA)`.
pub fn norm2(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = if a.nrows() >= a.ncols() {
        a.transpose() * a
    } else {
        a * a.transpose()
    };
    nalgebra::SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .sqrt()
}

/// Thin singular value decomposition `M = U diag(s) Vᵀ`.
///
/// Singular values are decreasing; each column of `U` belonging to a nonzero
/// singular value has its largest-magnitude entry positive, and the matching
/// column of `V` follows the sign. Singular vectors are only guaranteed for
/// nonzero singular values; the others may be zero columns.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided Jacobi SVD.
pub fn svd(m: &Matrix) -> Result<Svd> {
    ensure_finite(m, "SVD input")?;
    if m.nrows() < m.ncols() {
        let t = svd(&m.transpose())?;
        let mut out = Svd { u: t.v, s: t.s, v: t.u };
        normalize_signs(&mut out);
        return Ok(out);
    }
    let (rows, cols) = m.shape();
    let mut u = m.clone();
    let mut v = Matrix::identity(cols, cols);
    let tol = f64::EPSILON * (rows as f64).sqrt();
    let mut converged = cols < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut u, &mut v] {
                    for i in 0..mat.nrows() {
                        let a = mat[(i, p)];
                        let b = mat[(i, q)];
                        mat[(i, p)] = c * a - s * b;
                        mat[(i, q)] = s * a + c * b;
                    }
                }
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NoConvergence("Jacobi SVD".into()));
    }
    let norms: Vec<f64> = (0..cols).map(|j| u.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let mut out = Svd {
        u: Matrix::zeros(rows, cols),
        s: Vec::with_capacity(cols),
        v: Matrix::zeros(cols, cols),
    };
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        if sigma > 0.0 {
            out.u.set_column(dst, &(u.column(src) / sigma));
        }
        out.v.set_column(dst, &v.column(src));
        out.s.push(sigma);
    }
    normalize_signs(&mut out);
    Ok(out)
}

fn normalize_signs(svd: &mut Svd) {
    for j in 0..svd.s.len() {
        let col = svd.u.column(j);
        let big = col.iter().cloned().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if big < 0.0 {
            svd.u.column_mut(j).neg_mut();
            svd.v.column_mut(j).neg_mut();
        }
    }
}

/// Real Schur decomposition `A = Q T Qᵀ` with `T` upper quasi-triangular.
#[derive(Debug, Clone)]
pub struct SchurForm {
    pub orthogonal: Matrix,
    pub quasi_triangular: Matrix,
}

/// Eigenvalue as `(re, im)`.
pub type Eigenvalue = (f64, f64);

/// Diagonal block partition `(start, size)` of a quasi-triangular matrix.
fn diagonal_blocks(t: &Matrix) -> Result<Vec<(usize, usize)>> {
    let n = t.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            if i + 2 < n && t[(i + 2, i + 1)] != 0.0 {
                return Err(Error::NoConvergence(
                    "Schur form has overlapping 2x2 blocks".into(),
                ));
            }
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    Ok(blocks)
}

impl SchurForm {
    pub fn dim(&self) -> usize {
        self.quasi_triangular.nrows()
    }

    /// Eigenvalues read off the diagonal blocks, in block order.
    pub fn eigenvalues(&self) -> Vec<Eigenvalue> {
        let t = &self.quasi_triangular;
        let mut out = Vec::with_capacity(self.dim());
        // Block structure was validated at construction.
        for (s, size) in diagonal_blocks(t).unwrap_or_default() {
            if size == 1 {
                out.push((t[(s, s)], 0.0));
            } else {
                let (a, b, c, d) = (t[(s, s)], t[(s, s + 1)], t[(s + 1, s)], t[(s + 1, s + 1)]);
                let half_tr = 0.5 * (a + d);
                let disc = 0.25 * (a - d) * (a - d) + b * c;
                if disc >= 0.0 {
                    let r = disc.sqrt();
                    out.push((half_tr + r, 0.0));
                    out.push((half_tr - r, 0.0));
                } else {
                    let r = (-disc).sqrt();
                    out.push((half_tr, r));
                    out.push((half_tr, -r));
                }
            }
        }
        out
    }

    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|e| e.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.orthogonal * &self.quasi_triangular * self.orthogonal.transpose()
    }
}

/// Computes the real Schur form of a square matrix.
pub fn real_schur(a: &Matrix) -> Result<SchurForm> {
    ensure_square(a)?;
    ensure_finite(a, "A")?;
    let n = a.nrows();
    let schur = nalgebra::linalg::Schur::try_new(
        a.clone(),
        f64::EPSILON,
        SCHUR_MAX_SWEEPS_PER_DIM * n.max(1),
    )
    .ok_or_else(|| Error::NoConvergence(format!("real Schur of a {n}x{n} matrix")))?;
    let (q, mut t) = schur.unpack();
    for j in 0..n {
        for i in (j + 2)..n {
            t[(i, j)] = 0.0;
        }
    }
    // Validate the block structure once so later consumers can rely on it.
    diagonal_blocks(&t)?;
    Ok(SchurForm {
        orthogonal: q,
        quasi_triangular: t,
    })
}

/// Eigenvalues of a square matrix through its Schur form.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Eigenvalue>> {
    Ok(real_schur(a)?.eigenvalues())
}

/// True iff every eigenvalue of `a` has real part `< -margin`.
pub fn is_stable(a: &Matrix, margin: f64) -> Result<bool> {
    if a.nrows() == 0 {
        ensure_square(a)?;
        return Ok(true);
    }
    Ok(real_schur(a)?.max_real_part() < -margin)
}

/// `is_stable` with the default margin `1e-10·‖A‖₂`.
pub fn is_stable_default(a: &Matrix) -> Result<bool> {
    is_stable(a, STABILITY_MARGIN * norm2(a))
}

fn check_sylvester_gap(sa: &SchurForm, sb: &SchurForm) -> Result<()> {
    let scale = sa.quasi_triangular.norm() + sb.quasi_triangular.norm();
    let ea = sa.eigenvalues();
    let eb = sb.eigenvalues();
    let mut gap = f64::INFINITY;
    for &(ra, ia) in &ea {
        for &(rb, ib) in &eb {
            gap = gap.min((ra + rb).hypot(ia + ib));
        }
    }
    if gap <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::SingularSylvester { gap });
    }
    Ok(())
}

/// Solves `A X + X B + C = 0` given precomputed Schur forms of `A` and `B`.
///
/// Lets callers that solve repeatedly against a fixed coefficient factor it once.
pub fn solve_sylvester_schur(sa: &SchurForm, sb: &SchurForm, c: &Matrix) -> Result<Matrix> {
    let (p, q) = (sa.dim(), sb.dim());
    ensure_shape(c, p, q, "Sylvester right-hand side")?;
    ensure_finite(c, "C")?;
    check_sylvester_gap(sa, sb)?;
    if p == 0 || q == 0 {
        return Ok(Matrix::zeros(p, q));
    }
    let f = -(sa.orthogonal.transpose() * c * &sb.orthogonal);
    let y = solve_quasi_triangular(&sa.quasi_triangular, &sb.quasi_triangular, f)?;
    Ok(&sa.orthogonal * y * sb.orthogonal.transpose())
}

/// Solves `A X + X B + C = 0` for `X` (Bartels–Stewart).
pub fn solve_sylvester(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Matrix> {
    let sa = real_schur(a)?;
    let sb = real_schur(b)?;
    solve_sylvester_schur(&sa, &sb, c)
}

/// Solves `A P + P Aᵀ + W = 0` for stable `A` and symmetric `W`.
///
/// The returned `P` is bitwise symmetric.
pub fn solve_lyapunov(a: &Matrix, w: &Matrix) -> Result<Matrix> {
    ensure_square(a)?;
    ensure_shape(w, a.nrows(), a.nrows(), "Lyapunov right-hand side")?;
    let sa = real_schur(a)?;
    let margin = STABILITY_MARGIN * norm2(a);
    let max_real = sa.max_real_part();
    if a.nrows() > 0 && max_real >= -margin {
        return Err(Error::Unstable { max_real });
    }
    let sat = real_schur(&a.transpose())?;
    let mut p = solve_sylvester_schur(&sa, &sat, w)?;
    symmetrize_in_place(&mut p);
    Ok(p)
}

/// Back-substitution for `TA Y + Y TB = F` with both `TA`, `TB` upper quasi-triangular.
/// `f` is overwritten with the solution.
fn solve_quasi_triangular(ta: &Matrix, tb: &Matrix, mut y: Matrix) -> Result<Matrix> {
    let p = ta.nrows();
    let blocks_a = diagonal_blocks(ta)?;
    let blocks_b = diagonal_blocks(tb)?;

    for &(j0, nj) in &blocks_b {
        // Move already-solved columns to the right-hand side.
        for j in j0..j0 + nj {
            for k in 0..j0 {
                let coef = tb[(k, j)];
                if coef != 0.0 {
                    for i in 0..p {
                        y[(i, j)] -= y[(i, k)] * coef;
                    }
                }
            }
        }
        for &(i0, ni) in blocks_a.iter().rev() {
            let dim = ni * nj;
            let mut rhs = [0.0f64; 4];
            for b in 0..nj {
                for a in 0..ni {
                    let mut s = y[(i0 + a, j0 + b)];
                    for l in (i0 + ni)..p {
                        s -= ta[(i0 + a, l)] * y[(l, j0 + b)];
                    }
                    rhs[a + ni * b] = s;
                }
            }
            // Small system (I ⊗ TA_ii + TB_jjᵀ ⊗ I) vec(Z) = vec(R).
            let mut k = [[0.0f64; 4]; 4];
            for b in 0..nj {
                for a in 0..ni {
                    let row = a + ni * b;
                    for c in 0..ni {
                        k[row][c + ni * b] += ta[(i0 + a, i0 + c)];
                    }
                    for d in 0..nj {
                        k[row][a + ni * d] += tb[(j0 + d, j0 + b)];
                    }
                }
            }
            let z = solve_small(&mut k, &mut rhs, dim)?;
            for b in 0..nj {
                for a in 0..ni {
                    y[(i0 + a, j0 + b)] = z[a + ni * b];
                }
            }
        }
    }
    Ok(y)
}

/// Gaussian elimination with partial pivoting on a system of size ≤ 4.
fn solve_small(k: &mut [[f64; 4]; 4], rhs: &mut [f64; 4], dim: usize) -> Result<[f64; 4]> {
    let scale = k
        .iter()
        .take(dim)
        .flat_map(|r| r.iter().take(dim))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..dim {
        let piv = (col..dim)
            .max_by(|&a, &b| k[a][col].abs().total_cmp(&k[b][col].abs()))
            .unwrap_or(col);
        if k[piv][col].abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SingularSylvester {
                gap: k[piv][col].abs(),
            });
        }
        k.swap(col, piv);
        rhs.swap(col, piv);
        for row in (col + 1)..dim {
            let f = k[row][col] / k[col][col];
            if f != 0.0 {
                for c in col..dim {
                    k[row][c] -= f * k[col][c];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut x = [0.0f64; 4];
    for row in (0..dim).rev() {
        let mut s = rhs[row];
        for c in (row + 1)..dim {
            s -= k[row][c] * x[c];
        }
        x[row] = s / k[row][row];
    }
    Ok(x)
}

/// Thin QR factorization `N = Q R` with strictly positive diagonal in `R`.
pub fn qr_positive(n: &Matrix) -> Result<(Matrix, Matrix)> {
    ensure_finite(n, "N")?;
    let (rows, cols) = n.shape();
    if cols > rows {
        return Err(Error::Shape(format!(
            "qr_positive needs rows >= cols, got {rows}x{cols}"
        )));
    }
    let qr = n.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    let threshold = 1e-12 * n.norm();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
        if r[(j, j)] <= threshold {
            return Err(Error::RankDeficient {
                index: j,
                value: r[(j, j)],
                threshold,
            });
        }
    }
    Ok((q, r))
}

/// LU factorization with partial pivoting that supports solves with `A` and `Aᵀ`.
#[derive(Debug, Clone)]
pub struct LuFactor {
    lu: Matrix,
    perm: Vec<usize>,
}

impl LuFactor {
    pub fn new(a: &Matrix) -> Result<Self> {
        ensure_square(a)?;
        ensure_finite(a, "A")?;
        let n = a.nrows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let tol = f64::EPSILON * a.amax() * n as f64;
        for col in 0..n {
            let mut piv = col;
            let mut best = lu[(col, col)].abs();
            for row in (col + 1)..n {
                let v = lu[(row, col)].abs();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            if best <= tol || best == 0.0 {
                return Err(Error::Singular(format!("zero pivot in column {col}")));
            }
            if piv != col {
                lu.swap_rows(col, piv);
                perm.swap(col, piv);
            }
            let d = lu[(col, col)];
            for row in (col + 1)..n {
                lu[(row, col)] /= d;
            }
            for c in (col + 1)..n {
                let u = lu[(col, c)];
                if u != 0.0 {
                    for row in (col + 1)..n {
                        let l = lu[(row, col)];
                        lu[(row, c)] -= l * u;
                    }
                }
            }
        }
        Ok(LuFactor { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        ensure_shape(b, n, b.ncols(), "LU right-hand side")?;
        let mut x = Matrix::zeros(n, b.ncols());
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from(&b.row(p));
        }
        for k in 0..b.ncols() {
            let mut col = x.column_mut(k);
            for i in 0..n {
                let mut s = col[i];
                for j in 0..i {
                    s -= self.lu[(i, j)] * col[j];
                }
                col[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for j in (i + 1)..n {
                    s -= self.lu[(i, j)] * col[j];
                }
                col[i] = s / self.lu[(i, i)];
            }
        }
        Ok(x)
    }

    /// Solves `Aᵀ X = B` with the same factors.
    pub fn solve_transpose(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        ensure_shape(b, n, b.ncols(), "LU right-hand side")?;
        let mut z = b.clone();
        // Aᵀ = Uᵀ Lᵀ Pᵀ... with P A = L U, Aᵀ Pᵀ = Uᵀ Lᵀ.
        for k in 0..b.ncols() {
            let mut col = z.column_mut(k);
            for i in 0..n {
                let mut s = col[i];
                for j in 0..i {
                    s -= self.lu[(j, i)] * col[j];
                }
                col[i] = s / self.lu[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for j in (i + 1)..n {
                    s -= self.lu[(j, i)] * col[j];
                }
                col[i] = s;
            }
        }
        let mut x = Matrix::zeros(n, b.ncols());
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(p).copy_from(&z.row(i));
        }
        Ok(x)
    }
}

/// Column-major `vec` of a matrix.
pub fn vec(m: &Matrix) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(m.as_slice())
}
