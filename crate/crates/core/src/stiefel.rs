//! Geometry of the Stiefel manifold `St(n,r)` with the embedded metric
//! `⟨ξ₁, ξ₂⟩ = tr(ξ₂ᵀ ξ₁)`, and of the product manifold
//! `St(n,r) × R^{r×m} × R^{1×r} × S_r`.
//!
//! Retraction is the positive-diagonal QR factor `q(V + η)`. Vector transport
//! carries `ξ` to the tangent space at `q(V + η)` through
//!
//! ```text
//! T_η(ξ) = Q ρ_skew(Qᵀ ξ R⁻¹) + (I − Q Qᵀ) ξ R⁻¹,   Q R = V + η,
//! ```
//!
//! where `ρ_skew` keeps the strict lower triangle and mirrors it with a sign flip.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::linalg::{ensure_shape, ensure_square, inner, qr_positive, sym, Matrix};

static REORTHONORMALIZATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of times a [`StiefelPoint`] had to be re-orthonormalized on construction.
pub fn reorthonormalization_count() -> usize {
    REORTHONORMALIZATIONS.load(Ordering::Relaxed)
}

/// `‖VᵀV − I‖_F`.
pub fn orthonormality_residual(v: &Matrix) -> f64 {
    let r = v.ncols();
    (v.transpose() * v - Matrix::identity(r, r)).norm()
}

/// `‖Vᵀξ + ξᵀV‖_F`.
pub fn tangency_residual(v: &Matrix, xi: &Matrix) -> f64 {
    let s = v.transpose() * xi;
    (&s + s.transpose()).norm()
}

/// A column-orthonormal `n × r` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    v: Matrix,
}

impl StiefelPoint {
    /// Accepts `v` when `‖VᵀV − I‖_F ≤ 1e-10·√r`, otherwise replaces it with its
    /// positive-diagonal QR factor.
    pub fn new(v: Matrix) -> Result<Self> {
        let (n, r) = v.shape();
        if r > n {
            return Err(Error::Shape(format!("Stiefel point needs n >= r, got {n}x{r}")));
        }
        crate::linalg::ensure_finite(&v, "V")?;
        if orthonormality_residual(&v) <= 1e-10 * (r as f64).sqrt() {
            return Ok(StiefelPoint { v });
        }
        REORTHONORMALIZATIONS.fetch_add(1, Ordering::Relaxed);
        let (q, _) = qr_positive(&v)?;
        Ok(StiefelPoint { v: q })
    }

    /// First `r` columns of the identity.
    pub fn leading_identity(n: usize, r: usize) -> Result<Self> {
        StiefelPoint::new(Matrix::identity(n, r))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.v
    }

    pub fn into_matrix(self) -> Matrix {
        self.v
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn r(&self) -> usize {
        self.v.ncols()
    }
}

/// A tangent direction at a Stiefel point.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelTangent {
    pub xi: Matrix,
}

impl StiefelTangent {
    pub fn zeros(n: usize, r: usize) -> Self {
        StiefelTangent {
            xi: Matrix::zeros(n, r),
        }
    }

    pub fn inner(&self, other: &Self) -> f64 {
        inner(&self.xi, &other.xi)
    }

    pub fn norm(&self) -> f64 {
        self.xi.norm()
    }

    pub fn scaled(&self, s: f64) -> Self {
        StiefelTangent { xi: &self.xi * s }
    }

    /// `self + s·other`
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        StiefelTangent {
            xi: &self.xi + &other.xi * s,
        }
    }
}

/// Orthogonal projection `P_V(D) = D − ½ V (VᵀD + DᵀV)` onto the tangent space.
pub fn project_tangent(v: &StiefelPoint, d: &Matrix) -> Result<StiefelTangent> {
    ensure_shape(d, v.n(), v.r(), "direction")?;
    let vtd = v.v.transpose() * d;
    Ok(StiefelTangent {
        xi: d - &v.v * sym(&vtd),
    })
}

/// `q(V + η)` together with the triangular factor `R = q(V+η)ᵀ(V+η)`.
pub fn retract_with_factor(v: &StiefelPoint, eta: &StiefelTangent) -> Result<(StiefelPoint, Matrix)> {
    ensure_shape(&eta.xi, v.n(), v.r(), "tangent")?;
    if eta.xi.iter().all(|&x| x == 0.0) {
        return Ok((v.clone(), Matrix::identity(v.r(), v.r())));
    }
    let (q, r) = qr_positive(&(&v.v + &eta.xi))?;
    Ok((StiefelPoint { v: q }, r))
}

/// QR retraction `R_V(η) = q(V + η)`; `R_V(0) = V` exactly.
pub fn retract(v: &StiefelPoint, eta: &StiefelTangent) -> Result<StiefelPoint> {
    Ok(retract_with_factor(v, eta)?.0)
}

/// Skew-symmetric matrix built from the strict lower triangle of `d`.
pub fn rho_skew(d: &Matrix) -> Result<Matrix> {
    ensure_square(d)?;
    let n = d.nrows();
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i > j {
            d[(i, j)]
        } else if i == j {
            0.0
        } else {
            -d[(j, i)]
        }
    }))
}

/// `ξ R⁻¹` by back-substitution against the upper-triangular `R`.
fn right_solve_upper(xi: &Matrix, r: &Matrix) -> Result<Matrix> {
    let k = r.nrows();
    let mut out = xi.clone();
    for j in 0..k {
        let d = r[(j, j)];
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Singular("transport factor has a zero diagonal".into()));
        }
        for l in 0..j {
            let c = r[(l, j)];
            if c != 0.0 {
                for i in 0..out.nrows() {
                    let v = out[(i, l)];
                    out[(i, j)] -= v * c;
                }
            }
        }
        for i in 0..out.nrows() {
            out[(i, j)] /= d;
        }
    }
    Ok(out)
}

/// Transport given the retracted point `Q = q(V+η)` and its factor `R`.
pub fn transport_with_factor(q: &StiefelPoint, r: &Matrix, xi: &StiefelTangent) -> Result<StiefelTangent> {
    ensure_shape(&xi.xi, q.n(), q.r(), "tangent")?;
    let qm = &q.v;
    let w = right_solve_upper(&xi.xi, r)?;
    let qtw = qm.transpose() * &w;
    let normal = &w - qm * &qtw;
    Ok(StiefelTangent {
        xi: qm * rho_skew(&qtw)? + normal,
    })
}

/// Vector transport of `ξ` along `η` into the tangent space at `R_V(η)`.
pub fn transport(v: &StiefelPoint, eta: &StiefelTangent, xi: &StiefelTangent) -> Result<StiefelTangent> {
    let (q, r) = retract_with_factor(v, eta)?;
    transport_with_factor(&q, &r, xi)
}

/// Scales a transported vector by `min{1, source_norm/‖transported‖}`.
pub fn deflate(transported: &StiefelTangent, source_norm: f64) -> StiefelTangent {
    transported.scaled(deflation_factor(transported.norm(), source_norm))
}

pub(crate) fn deflation_factor(transported_norm: f64, source_norm: f64) -> f64 {
    if transported_norm <= source_norm || transported_norm == 0.0 {
        1.0
    } else {
        source_norm / transported_norm
    }
}

/// A point `(U, B̂, Ĉ, M̂)` of the product manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint {
    pub u: StiefelPoint,
    pub b: Matrix,
    pub c: Matrix,
    pub m: Matrix,
}

impl ProductPoint {
    /// Validates shapes; `M̂` is symmetrized.
    pub fn new(u: StiefelPoint, b: Matrix, c: Matrix, mut m: Matrix) -> Result<Self> {
        let r = u.r();
        ensure_shape(&b, r, b.ncols(), "B̂")?;
        ensure_shape(&c, 1, r, "Ĉ")?;
        ensure_shape(&m, r, r, "M̂")?;
        crate::linalg::symmetrize_in_place(&mut m);
        Ok(ProductPoint { u, b, c, m })
    }

    pub fn r(&self) -> usize {
        self.u.r()
    }
}

/// A tangent vector (or raw ambient direction) on the product manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTangent {
    pub u: StiefelTangent,
    pub b: Matrix,
    pub c: Matrix,
    pub m: Matrix,
}

impl ProductTangent {
    pub fn zeros_like(p: &ProductPoint) -> Self {
        let (n, r) = (p.u.n(), p.r());
        ProductTangent {
            u: StiefelTangent::zeros(n, r),
            b: Matrix::zeros(r, p.b.ncols()),
            c: Matrix::zeros(1, r),
            m: Matrix::zeros(r, r),
        }
    }

    /// Sum of the componentwise trace inner products.
    pub fn inner(&self, other: &Self) -> f64 {
        self.u.inner(&other.u)
            + inner(&self.b, &other.b)
            + inner(&self.c, &other.c)
            + inner(&self.m, &other.m)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        ProductTangent {
            u: self.u.scaled(s),
            b: &self.b * s,
            c: &self.c * s,
            m: &self.m * s,
        }
    }

    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        ProductTangent {
            u: self.u.add_scaled(s, &other.u),
            b: &self.b + &other.b * s,
            c: &self.c + &other.c * s,
            m: &self.m + &other.m * s,
        }
    }
}

/// `(P_U(Ū), B̄, C̄, sym(M̄))`.
pub fn product_project(p: &ProductPoint, d: &ProductTangent) -> Result<ProductTangent> {
    let r = p.r();
    ensure_shape(&d.b, r, p.b.ncols(), "B̄")?;
    ensure_shape(&d.c, 1, r, "C̄")?;
    ensure_shape(&d.m, r, r, "M̄")?;
    Ok(ProductTangent {
        u: project_tangent(&p.u, &d.u.xi)?,
        b: d.b.clone(),
        c: d.c.clone(),
        m: sym(&d.m),
    })
}

/// `(q(U+U′), B̂+B′, Ĉ+C′, M̂+M′)`.
pub fn product_retract(p: &ProductPoint, xi: &ProductTangent) -> Result<ProductPoint> {
    Ok(product_retract_with_factor(p, xi)?.0)
}

pub fn product_retract_with_factor(p: &ProductPoint, xi: &ProductTangent) -> Result<(ProductPoint, Matrix)> {
    let (u, r) = retract_with_factor(&p.u, &xi.u)?;
    let point = ProductPoint::new(u, &p.b + &xi.b, &p.c + &xi.c, &p.m + &xi.m)?;
    Ok((point, r))
}

/// Stiefel slot transported, Euclidean slots copied.
pub fn product_transport(p: &ProductPoint, eta: &ProductTangent, xi: &ProductTangent) -> Result<ProductTangent> {
    Ok(ProductTangent {
        u: transport(&p.u, &eta.u, &xi.u)?,
        b: xi.b.clone(),
        c: xi.c.clone(),
        m: xi.m.clone(),
    })
}
