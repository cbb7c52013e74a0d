mod common;

use common::{rel, rng, stable, stiefel, symmetric, system, uniform};
use lqo_core::gradients::galerkin_reduce;
use lqo_core::linalg::{qr_positive, Matrix};
use lqo_core::lqo::{
    error_system, gramians, h2_error_blocks, h2_norm, h2_norm_squared, relative_h2_error, simulate,
};
use lqo_core::LqoSystem;
use rand::Rng;

/// Squared H2 norm from the Volterra kernels of a symmetric-`A` system,
/// integrated in closed form in the eigenbasis of `A`.
fn kernel_norm_squared(sys: &LqoSystem) -> f64 {
    let eig = sys.a().clone().symmetric_eigen();
    let (lam, q) = (eig.eigenvalues, eig.eigenvectors);
    let b = q.transpose() * sys.b();
    let c = q.transpose() * sys.c().transpose();
    let m = q.transpose() * sys.m() * &q;
    let n = sys.order();
    let mut total = 0.0;
    for a in 0..sys.inputs() {
        for i in 0..n {
            for k in 0..n {
                total += c[i] * b[(i, a)] * c[k] * b[(k, a)] / -(lam[i] + lam[k]);
            }
        }
        for e in 0..sys.inputs() {
            let w = Matrix::from_fn(n, n, |i, j| b[(i, a)] * m[(i, j)] * b[(j, e)]);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            total += w[(i, j)] * w[(k, l)] / ((lam[i] + lam[k]) * (lam[j] + lam[l]));
                        }
                    }
                }
            }
        }
    }
    total
}

#[test]
fn h2_norm_matches_kernel_integrals() {
    for seed in 0..6u64 {
        let mut g = rng(500 + seed);
        let n = 4 + seed as usize;
        let s = symmetric(&mut g, n);
        let a = -(&s * &s) - Matrix::identity(n, n) * 0.3;
        let inputs = 1 + (seed as usize % 2);
        let sys = LqoSystem::new(a, uniform(&mut g, n, inputs), uniform(&mut g, 1, n), symmetric(&mut g, n))
            .unwrap();
        let oracle = kernel_norm_squared(&sys);
        let got = h2_norm_squared(&sys).unwrap();
        assert!(rel(got, oracle) < 1e-10, "seed {seed}: {got} vs {oracle}");
    }
}

#[test]
fn gramians_satisfy_their_equations() {
    let mut g = rng(13);
    let sys = system(&mut g, 30, 2);
    let gp = gramians(&sys).unwrap();
    let (a, b, c, m) = (sys.a(), sys.b(), sys.c(), sys.m());
    let rp = a * &gp.p + &gp.p * a.transpose() + b * b.transpose();
    assert!(rp.norm() < 1e-10 * a.norm() * gp.p.norm());
    let rq = a.transpose() * &gp.q + &gp.q * a + c.transpose() * c + m * &gp.p * m;
    assert!(rq.norm() < 1e-10 * a.norm() * gp.q.norm());
    assert_eq!(gp.q, gp.q.transpose());
}

#[test]
fn block_error_equals_error_system_norm() {
    let mut g = rng(600);
    for pair in 0..20 {
        let n = g.random_range(4..=60usize);
        let r = g.random_range(1..=(n - 1).min(8));
        let m = g.random_range(1..=2usize);
        let sys = system(&mut g, n, m);
        let red = if pair % 2 == 0 {
            galerkin_reduce(&sys, &stiefel(&mut g, n, r)).unwrap()
        } else {
            LqoSystem::new(stable(&mut g, r), uniform(&mut g, r, m), uniform(&mut g, 1, r), symmetric(&mut g, r))
                .unwrap()
        };
        let blocks = h2_error_blocks(&sys, &red).unwrap();
        let direct = h2_norm_squared(&error_system(&sys, &red).unwrap()).unwrap();
        assert!(rel(blocks.j, direct) < 1e-8, "pair {pair} (n={n}, r={r}): {} vs {direct}", blocks.j);
    }
}

#[test]
fn relative_error_is_scale_free() {
    let mut g = rng(14);
    let sys = system(&mut g, 20, 1);
    let red = galerkin_reduce(&sys, &stiefel(&mut g, 20, 4)).unwrap();
    let e = relative_h2_error(&sys, &red).unwrap();
    let direct = h2_norm(&error_system(&sys, &red).unwrap()).unwrap() / h2_norm(&sys).unwrap();
    assert!(rel(e, direct) < 1e-8);
    // orthogonal state changes leave the norm unchanged
    let t = qr_positive(&uniform(&mut g, 20, 20)).unwrap().0;
    let moved = sys.transformed(&t).unwrap();
    assert!(rel(h2_norm(&moved).unwrap(), h2_norm(&sys).unwrap()) < 1e-8);
}

#[test]
fn step_response_matches_matrix_exponential() {
    let mut g = rng(15);
    let sys = system(&mut g, 8, 1);
    let t_end = 2.0;
    let sim = simulate(&sys, |_| 1.0, t_end, 400).unwrap();
    let a = sys.a();
    let lu = a.clone().lu();
    for k in [100usize, 250, 400] {
        let t = sim.times[k];
        let e = (a * t).exp();
        let x = lu.solve(&((e - Matrix::identity(8, 8)) * sys.b())).unwrap();
        let y = sys.output(&x.column(0).into_owned());
        assert!((sim.outputs[k] - y).abs() < 1e-8 * y.abs().max(1.0), "t = {t}: {} vs {y}", sim.outputs[k]);
    }
}

#[test]
fn banded_step_response_matches_matrix_exponential() {
    // tridiagonal A takes the compressed-row path of the integrator
    let n = 12;
    let a = Matrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => -2.0 * 13.0 * 13.0,
        1 => 13.0 * 13.0,
        _ => 0.0,
    });
    let mut c = Matrix::zeros(1, n);
    c[(0, 5)] = 1.0;
    let sys = LqoSystem::new(a, Matrix::from_element(n, 1, 1.0), c, Matrix::identity(n, n) / n as f64).unwrap();
    let sim = simulate(&sys, |_| 1.0, 0.5, 50).unwrap();
    let lu = sys.a().clone().lu();
    for k in [10usize, 50] {
        let t = sim.times[k];
        let x = lu.solve(&(((sys.a() * t).exp() - Matrix::identity(n, n)) * sys.b())).unwrap();
        let y = sys.output(&x.column(0).into_owned());
        assert!((sim.outputs[k] - y).abs() < 1e-8 * y.abs().max(1.0), "t = {t}: {} vs {y}", sim.outputs[k]);
    }
}
