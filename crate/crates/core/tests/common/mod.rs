#![allow(dead_code)]

use lqo_core::linalg::{qr_positive, Matrix};
use lqo_core::stiefel::StiefelPoint;
use lqo_core::LqoSystem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Stable matrix with `A + Aᵀ` negative definite.
pub fn stable(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let g = uniform(rng, n, n);
    let s = uniform(rng, n, n);
    let skew = (&s - s.transpose()) * 0.5;
    -(&g * g.transpose()) / n as f64 - Matrix::identity(n, n) * 0.5 + skew
}

pub fn symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let s = uniform(rng, n, n);
    (&s + s.transpose()) * 0.5
}

pub fn system(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LqoSystem {
    let a = stable(rng, n);
    let b = uniform(rng, n, m);
    let c = uniform(rng, 1, n);
    let mm = symmetric(rng, n);
    LqoSystem::new(a, b, c, mm).unwrap()
}

pub fn stiefel(rng: &mut ChaCha8Rng, n: usize, r: usize) -> StiefelPoint {
    StiefelPoint::new(qr_positive(&uniform(rng, n, r)).unwrap().0).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
