//! Benchmark systems: a random dissipative family and a 1-D heat equation.

use lqo_core::linalg::{qr_positive, symmetrize_in_place, Matrix};
use lqo_core::{Error, LqoSystem, Result};
use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identifier of the random generator, recorded in every output.
pub const RNG_NAME: &str = "chacha8";

/// Uniform `[0, 1)` from the top 53 bits of a 64-bit draw.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

/// `A = Q diag(λ) Qᵀ + (S − Sᵀ)/2` with `λᵢ ~ U(−2, −0.1)`, `Q` the
/// orthogonal factor of a `U(−1,1)` matrix and `Sᵢⱼ ~ U(−1,1)`;
/// `B = 1`, `C = 1ᵀ`, `M = I`.
///
/// Draw order: the `n` eigenvalues, then the entries of the matrix behind `Q`
/// and then of `S`, both column by column.
pub fn gen_synthetic(n: usize, seed: u64) -> Result<LqoSystem> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("synthetic benchmark needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eig: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -2.0, -0.1)).collect();
    let g = fill(Matrix::zeros(n, n), &mut rng);
    let s = fill(Matrix::zeros(n, n), &mut rng);
    let (q, _) = qr_positive(&g)?;
    let mut sym = &q * Matrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
    symmetrize_in_place(&mut sym);
    let a = sym + (&s - s.transpose()) * 0.5;
    LqoSystem::new(a, Matrix::from_element(n, 1, 1.0), Matrix::from_element(1, n, 1.0), Matrix::identity(n, n))
}

fn fill(mut m: Matrix, rng: &mut ChaCha8Rng) -> Matrix {
    for v in m.iter_mut() {
        *v = uniform(rng, -1.0, 1.0);
    }
    m
}

/// Zero-based index of the grid node nearest `x = 1/2` (the lower one on ties).
pub fn heat_output_node(n: usize) -> usize {
    (n - 1) / 2
}

/// Finite-difference heat equation on `(0, 1)` with `n` interior nodes:
/// `A = (n+1)²·tridiag(1, −2, 1)`, uniform forcing `B = 1`, the temperature
/// at the middle node as `C`, and `M = I/n`.
pub fn gen_heat(n: usize) -> Result<LqoSystem> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("heat benchmark needs n >= 2, got {n}")));
    }
    let h2 = ((n + 1) * (n + 1)) as f64;
    let a = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            -2.0 * h2
        } else if i.abs_diff(j) == 1 {
            h2
        } else {
            0.0
        }
    });
    let mut c = Matrix::zeros(1, n);
    c[(0, heat_output_node(n))] = 1.0;
    LqoSystem::new(a, Matrix::from_element(n, 1, 1.0), c, Matrix::identity(n, n) / n as f64)
}
