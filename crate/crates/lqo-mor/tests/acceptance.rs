//! Acceptance suite. Every test checks one criterion at its stated tolerance
//! and runtime budget and prints a single `PASS`/`FAIL` line with the measured
//! values before asserting.
//!
//! Run with `cargo test -p lqo-mor --test acceptance -- --nocapture --test-threads 1`
//! to see the verdict lines in order.

use std::path::Path;
use std::time::{Duration, Instant};

use lqo_core::baselines::rational_krylov_basis;
use lqo_core::gradients::{galerkin_embedding, galerkin_reduce, solve_workspace, Evaluator, SolverBackend};
use lqo_core::linalg::{norm2, qr_positive, solve_lyapunov, solve_sylvester, vec, Matrix};
use lqo_core::lowrank::{approx_x, full_order_factorizations, FullOrderFactors, LaguerreConfig, ReducedFactors};
use lqo_core::lqo::{error_system, h2_error_blocks, h2_norm_squared, relative_h2_error};
use lqo_core::optimizer::{prcg_with, srcg_with, OptimizerConfig, RunTrace, Termination};
use lqo_core::stiefel::{
    orthonormality_residual, product_project, product_retract, project_tangent, retract, ProductTangent,
    StiefelPoint, StiefelTangent,
};
use lqo_core::LqoSystem;
use lqo_mor::bench::{numeric_outputs, run_benchmark, BenchmarkSpec, ResultTable};
use lqo_mor::config::Method;
use lqo_mor::generators::{gen_heat, gen_synthetic};
use lqo_mor::io::load_system;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- reporting

fn verdict(name: &str, limit: Duration, start: Instant, failures: &[String], summary: &str) {
    let elapsed = start.elapsed();
    let mut problems = failures.to_vec();
    if elapsed > limit {
        problems.push(format!("runtime {:.1} s over the {:.0} s budget", elapsed.as_secs_f64(), limit.as_secs_f64()));
    }
    let status = if problems.is_empty() { "PASS" } else { "FAIL" };
    println!("{status} {name}: {summary} [{:.1} s / {:.0} s]", elapsed.as_secs_f64(), limit.as_secs_f64());
    for p in &problems {
        println!("    - {p}");
    }
    assert!(problems.is_empty(), "{name}: {}", problems.join("; "));
}

// ---------------------------------------------------------------- random data

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(g: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| g.random_range(-1.0..1.0))
}

fn symmetric(g: &mut ChaCha8Rng, n: usize) -> Matrix {
    let s = uniform(g, n, n);
    (&s + s.transpose()) * 0.5
}

/// `A + Aᵀ` negative definite, hence stable.
fn stable(g: &mut ChaCha8Rng, n: usize) -> Matrix {
    let w = uniform(g, n, n);
    let s = uniform(g, n, n);
    -(&w * w.transpose()) / n as f64 - Matrix::identity(n, n) * 0.5 + (&s - s.transpose()) * 0.5
}

fn random_system(g: &mut ChaCha8Rng, n: usize, m: usize) -> LqoSystem {
    let a = stable(g, n);
    let b = uniform(g, n, m);
    let c = uniform(g, 1, n);
    let mm = symmetric(g, n);
    LqoSystem::new(a, b, c, mm).unwrap()
}

fn stiefel(g: &mut ChaCha8Rng, n: usize, r: usize) -> StiefelPoint {
    StiefelPoint::new(qr_positive(&uniform(g, n, r)).unwrap().0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------- solvers

fn kronecker_solve(a: &Matrix, b: &Matrix, c: &Matrix) -> Matrix {
    let (p, q) = (a.nrows(), b.nrows());
    let mut k = Matrix::zeros(p * q, p * q);
    for j in 0..q {
        for i in 0..p {
            for l in 0..p {
                k[(j * p + i, j * p + l)] += a[(i, l)];
            }
            for l in 0..q {
                k[(j * p + i, l * p + i)] += b[(l, j)];
            }
        }
    }
    let x = k.lu().solve(&(-vec(c))).expect("nonsingular Kronecker operator");
    Matrix::from_column_slice(p, q, x.as_slice())
}

#[test]
fn solver_residuals() {
    let start = Instant::now();
    let mut g = rng(31_415);
    let mut failures = Vec::new();
    let (mut worst_syl, mut worst_lyap, mut worst_kron) = (0.0f64, 0.0f64, 0.0f64);
    let mut kron_count = 0;
    for case in 0..200 {
        let p = g.random_range(1..=200usize);
        let q = g.random_range(1..=30usize);
        let a = stable(&mut g, p);
        let b = stable(&mut g, q);
        let c = uniform(&mut g, p, q);
        let x = solve_sylvester(&a, &b, &c).unwrap();
        let bound = 1e-10 * (a.norm() + b.norm()) * x.norm() + 1e-12 * c.norm();
        let res = (&a * &x + &x * &b + &c).norm();
        worst_syl = worst_syl.max(res / bound);
        if res > bound {
            failures.push(format!("Sylvester case {case} ({p}x{q}): residual {res:e} > {bound:e}"));
        }
        if p * q <= 400 {
            kron_count += 1;
            let xk = kronecker_solve(&a, &b, &c);
            let err = (&x - &xk).norm() / xk.norm();
            worst_kron = worst_kron.max(err);
            if err > 1e-8 {
                failures.push(format!("case {case}: Kronecker disagreement {err:e}"));
            }
        }
        // Lyapunov instance on the same A with a PSD right-hand side
        let bw = uniform(&mut g, p, q.min(3));
        let w = &bw * bw.transpose();
        let pl = solve_lyapunov(&a, &w).unwrap();
        let bound = 2e-10 * a.norm() * pl.norm() + 1e-12 * w.norm();
        let res = (&a * &pl + &pl * a.transpose() + &w).norm();
        worst_lyap = worst_lyap.max(res / bound);
        if res > bound {
            failures.push(format!("Lyapunov case {case} (n = {p}): residual {res:e} > {bound:e}"));
        }
        if pl != pl.transpose() {
            failures.push(format!("Lyapunov case {case}: solution not symmetric"));
        }
        let min_eig = pl.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-10 * norm2(&pl) {
            failures.push(format!("Lyapunov case {case}: eigenvalue {min_eig:e}"));
        }
    }
    verdict(
        "solver residuals",
        Duration::from_secs(30),
        start,
        &failures,
        &format!(
            "200 Sylvester + 200 Lyapunov instances, worst residual/bound {worst_syl:.2e} (Sylvester) {worst_lyap:.2e} (Lyapunov); \
             {kron_count} Kronecker checks, worst {worst_kron:.2e}"
        ),
    );
}

// ---------------------------------------------------------------- H2 identity

#[test]
fn h2_identity() {
    let start = Instant::now();
    let mut g = rng(27_182);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for pair in 0..20 {
        let n = g.random_range(4..=60usize);
        let r = g.random_range(1..=(n - 1).min(10));
        let m = 1 + pair % 2;
        let full = random_system(&mut g, n, m);
        let red = if pair % 2 == 0 {
            galerkin_reduce(&full, &stiefel(&mut g, n, r)).unwrap()
        } else {
            LqoSystem::new(stable(&mut g, r), uniform(&mut g, r, m), uniform(&mut g, 1, r), symmetric(&mut g, r)).unwrap()
        };
        let j = h2_error_blocks(&full, &red).unwrap().j;
        let direct = h2_norm_squared(&error_system(&full, &red).unwrap()).unwrap();
        let e = rel(j, direct);
        worst = worst.max(e);
        if e >= 1e-8 {
            failures.push(format!("pair {pair} (n = {n}, r = {r}): {j:e} vs {direct:e}"));
        }
    }
    verdict(
        "H2 identity",
        Duration::from_secs(10),
        start,
        &failures,
        &format!("20 pairs with n <= 60, worst relative gap {worst:.2e} (tol 1e-8)"),
    );
}

// ---------------------------------------------------------------- gradients

#[test]
fn gradient_correctness() {
    const H: f64 = 1e-5;
    let start = Instant::now();
    let mut failures = Vec::new();
    let (mut worst1, mut worst2) = (0.0f64, 0.0f64);
    for seed in 0..4u64 {
        let mut g = rng(1000 + seed);
        let sys = gen_synthetic(20, seed).unwrap();
        let ev = Evaluator::new(&sys, SolverBackend::Exact).unwrap();
        let v = stiefel(&mut g, 20, 4);
        let grad = ev.riem_grad_j1(&v).unwrap();
        let mut p = galerkin_embedding(&sys, &v).unwrap();
        p.b += uniform(&mut g, 4, 1) * 0.2;
        p.c += uniform(&mut g, 1, 4) * 0.2;
        p.m += symmetric(&mut g, 4) * 0.2;
        let grad2 = ev.riem_grad_j2(&p).unwrap();
        for dir in 0..5 {
            let xi = project_tangent(&v, &uniform(&mut g, 20, 4)).unwrap();
            let xi = xi.scaled(1.0 / xi.norm());
            let fd = (ev.cost_j1(&retract(&v, &xi.scaled(H)).unwrap()).unwrap()
                - ev.cost_j1(&retract(&v, &xi.scaled(-H)).unwrap()).unwrap())
                / (2.0 * H);
            let e = rel(fd, grad.inner(&xi));
            worst1 = worst1.max(e);
            if e >= 1e-5 {
                failures.push(format!("J1 seed {seed} direction {dir}: fd {fd:e} vs {:e}", grad.inner(&xi)));
            }

            let raw = ProductTangent {
                u: StiefelTangent { xi: uniform(&mut g, 20, 4) },
                b: uniform(&mut g, 4, 1),
                c: uniform(&mut g, 1, 4),
                m: symmetric(&mut g, 4),
            };
            let d = product_project(&p, &raw).unwrap();
            let d = d.scaled(1.0 / d.norm());
            let fd = (ev.cost_j2(&product_retract(&p, &d.scaled(H)).unwrap()).unwrap()
                - ev.cost_j2(&product_retract(&p, &d.scaled(-H)).unwrap()).unwrap())
                / (2.0 * H);
            let e = rel(fd, grad2.inner(&d));
            worst2 = worst2.max(e);
            if e >= 1e-5 {
                failures.push(format!("J2 seed {seed} direction {dir}: fd {fd:e} vs {:e}", grad2.inner(&d)));
            }
        }
    }
    verdict(
        "gradient correctness",
        Duration::from_secs(60),
        start,
        &failures,
        &format!("20 directions each on n = 20, r = 4: worst relative FD gap J1 {worst1:.2e}, J2 {worst2:.2e} (tol 1e-5)"),
    );
}

// ---------------------------------------------------------------- Laguerre

#[test]
fn laguerre_scheme() {
    let start = Instant::now();
    let mut failures = Vec::new();

    // scalar: a = â = −1, b = b̂ = 1, α = 1, N = 1 gives X = ∫ e^{−2t} dt = 1/2
    let one = |v: f64| Matrix::from_element(1, 1, v);
    let scalar = LqoSystem::new(one(-1.0), one(1.0), one(1.0), one(1.0)).unwrap();
    let cfg = LaguerreConfig::new(1.0, 1).unwrap();
    let x = approx_x(
        &FullOrderFactors::new(&scalar, cfg).unwrap(),
        &ReducedFactors::new(&scalar, cfg).unwrap(),
    )
    .unwrap()[(0, 0)];
    if (x - 0.5).abs() > 1e-15 {
        failures.push(format!("scalar X = {x}, expected 0.5"));
    }

    // heat n = 100, r = 6: exists (α, N ≤ 128) meeting both tolerances
    let sys = gen_heat(100).unwrap();
    let shifts: Vec<f64> = (1..=6).map(|i| 4.0 * i as f64).collect();
    let v = rational_krylov_basis(sys.a(), sys.b(), &shifts).unwrap();
    let red = galerkin_reduce(&sys, &v).unwrap();
    let exact = solve_workspace(&sys, &red, SolverBackend::Exact, false).unwrap();
    let mut best: Option<(f64, usize, f64, f64)> = None;
    let mut sweep = Vec::new();
    for alpha in [10.0, 30.0, 100.0, 300.0, 1000.0] {
        for terms in [8, 16, 32, 64, 128] {
            let ws = solve_workspace(&sys, &red, SolverBackend::Laguerre(LaguerreConfig::new(alpha, terms).unwrap()), false)
                .unwrap();
            let ex = (&ws.x - &exact.x).norm() / exact.x.norm();
            let ek = (&ws.k - &exact.k).norm() / exact.k.norm();
            sweep.push(format!("a={alpha} N={terms}: {ex:.1e}/{ek:.1e}"));
            if ex < 1e-4 && ek < 1e-3 && best.is_none_or(|b| terms < b.1) {
                best = Some((alpha, terms, ex, ek));
            }
        }
    }
    let heat_summary = match best {
        Some((alpha, terms, ex, ek)) => format!("heat n=100 r=6 alpha={alpha} N={terms}: X {ex:.1e}, K {ek:.1e}"),
        None => {
            failures.push(format!("no (alpha, N <= 128) meets X < 1e-4 and K < 1e-3: {}", sweep.join(", ")));
            "heat: no admissible N".into()
        }
    };

    // 100-iteration SRCG in Laguerre mode factors A − αI once; N = 32 is
    // accurate enough for X and K but not for the Wolfe curvature test
    let (alpha, terms) = (100.0, 64);
    let v0 = rational_krylov_basis(sys.a(), sys.b(), &shifts).unwrap();
    let before = full_order_factorizations();
    let ev = Evaluator::new(&sys, SolverBackend::Laguerre(LaguerreConfig::new(alpha, terms).unwrap())).unwrap();
    let cfg = OptimizerConfig { k_max: 100, epsilon: 1e-300, ..OptimizerConfig::heat() };
    let run = srcg_with(&ev, v0, &cfg).unwrap();
    let factorizations = full_order_factorizations() - before;
    if run.trace.iterations() != 100 {
        failures.push(format!(
            "SRCG stopped after {} iterations ({})",
            run.trace.iterations(),
            run.trace.termination.as_str()
        ));
    }
    if factorizations != 1 {
        failures.push(format!("{factorizations} factorizations of A - alpha I"));
    }
    verdict(
        "Laguerre scheme",
        Duration::from_secs(60),
        start,
        &failures,
        &format!(
            "scalar X = {x}; {heat_summary}; {}-iteration SRCG (alpha={alpha}, N={terms}) performed {factorizations} factorization(s)",
            run.trace.iterations()
        ),
    );
}

// ---------------------------------------------------------------- optimizer

fn contract_failures(name: &str, trace: &RunTrace, cfg: &OptimizerConfig, failures: &mut Vec<String>) -> String {
    let last = trace.last();
    if trace.termination != Termination::Converged || last.grad_rel >= cfg.epsilon {
        failures.push(format!(
            "{name}: delta = {:.3e} after {} iterations ({})",
            last.grad_rel,
            trace.iterations(),
            trace.termination.as_str()
        ));
    }
    if let Some(w) = trace.records.windows(2).find(|w| w[1].cost > w[0].cost) {
        failures.push(format!("{name}: cost rose at k = {}", w[1].k));
    }
    let worst_orth = trace.records.iter().map(|r| r.orthonormality).fold(0.0, f64::max);
    if worst_orth > 1e-10 {
        failures.push(format!("{name}: orthonormality {worst_orth:e}"));
    }
    format!(
        "{name} delta {:.3e} in {} it ({}), max |VtV-I| {worst_orth:.1e}",
        last.grad_rel,
        trace.iterations(),
        trace.termination.as_str()
    )
}

#[test]
fn optimizer_contracts() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let sys = gen_heat(200).unwrap();
    let shifts: Vec<f64> = (1..=10).map(|i| 4.0 * i as f64).collect();
    let v0 = rational_krylov_basis(sys.a(), sys.b(), &shifts).unwrap();
    let cfg = OptimizerConfig::heat();
    let ev = Evaluator::new(&sys, SolverBackend::Exact).unwrap();
    let s = srcg_with(&ev, v0.clone(), &cfg).unwrap();
    let p = prcg_with(&ev, galerkin_embedding(&sys, &v0).unwrap(), &cfg).unwrap();
    let s_sum = contract_failures("SRCG", &s.trace, &cfg, &mut failures);
    let p_sum = contract_failures("PRCG", &p.trace, &cfg, &mut failures);
    let final_orth = orthonormality_residual(s.point.matrix()).max(orthonormality_residual(p.point.u.matrix()));
    verdict(
        "optimizer contracts",
        Duration::from_secs(300),
        start,
        &failures,
        &format!("heat n=200 r=10: {s_sum}; {p_sum}; final orthonormality {final_orth:.1e}"),
    );
}

// ---------------------------------------------------------------- benchmarks

fn bench(spec: &str, dir: &Path) -> (BenchmarkSpec, ResultTable) {
    let spec: BenchmarkSpec = serde_json::from_str(spec).unwrap();
    let table = run_benchmark(&spec, dir).unwrap();
    (spec, table)
}

fn error_of(table: &ResultTable, method: Method, r: usize) -> f64 {
    let row = table.get(method, r).unwrap();
    row.rel_h2_error.unwrap_or_else(|| panic!("{method} r={r} failed: {:?}", row.error))
}

/// Reduced models reloaded from disk reproduce the tabulated error.
fn reload_failures(dir: &Path, spec: &BenchmarkSpec, table: &ResultTable, failures: &mut Vec<String>) {
    let (full, _) = load_system(&dir.join("system")).unwrap();
    for (m, r) in spec.cells() {
        let (red, _) = load_system(&dir.join("cells").join(format!("{m}_r{r}"))).unwrap();
        let (want, got) = (error_of(table, m, r), relative_h2_error(&full, &red).unwrap());
        if (got - want).abs() > 1e-12 * want.max(f64::MIN_POSITIVE) {
            failures.push(format!("{m} r={r}: reloaded error {got:e} vs {want:e}"));
        }
    }
}

#[test]
fn benchmark_reproduction() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let tmp = tempfile::tempdir().unwrap();

    let heat_dir = tmp.path().join("heat");
    let (heat_spec, heat) = bench(
        r#"{"system": {"kind": "heat", "n": 200}, "orders": [10],
            "methods": ["rational-krylov", "bt", "srcg", "prcg"]}"#,
        &heat_dir,
    );
    reload_failures(&heat_dir, &heat_spec, &heat, &mut failures);
    let rk = error_of(&heat, Method::RationalKrylov, 10);
    let (hs, hp, bt) = (
        error_of(&heat, Method::Srcg, 10),
        error_of(&heat, Method::Prcg, 10),
        error_of(&heat, Method::Bt, 10),
    );
    for (name, e) in [("SRCG", hs), ("PRCG", hp)] {
        if rk / e < 2.0 {
            failures.push(format!("heat {name}: improvement {:.2}x over rational Krylov ({rk:.3e} -> {e:.3e}) < 2x", rk / e));
        }
    }
    if bt >= 1e-3 {
        failures.push(format!("heat BT error {bt:e} >= 1e-3"));
    }

    let syn_dir = tmp.path().join("synthetic");
    let (syn_spec, syn) = bench(
        r#"{"system": {"kind": "synthetic", "n": 30, "seed": 0}, "orders": [6],
            "methods": ["krylov", "srcg", "prcg"]}"#,
        &syn_dir,
    );
    reload_failures(&syn_dir, &syn_spec, &syn, &mut failures);
    let kr = error_of(&syn, Method::Krylov, 6);
    let (ss, sp) = (error_of(&syn, Method::Srcg, 6), error_of(&syn, Method::Prcg, 6));
    for (name, e) in [("SRCG", ss), ("PRCG", sp)] {
        if !(e > 1e-4 && e < 1e-1) {
            failures.push(format!("synthetic {name} error {e:e} outside (1e-4, 1e-1)"));
        }
        if e >= kr {
            failures.push(format!("synthetic {name} error {e:e} does not beat Krylov {kr:e}"));
        }
    }
    verdict(
        "benchmark reproduction",
        Duration::from_secs(600),
        start,
        &failures,
        &format!(
            "heat r=10: rational Krylov {rk:.3e} -> SRCG {hs:.3e} ({:.2}x), PRCG {hp:.3e} ({:.2}x), BT {bt:.3e}; \
             synthetic r=6: Krylov {kr:.3e} -> SRCG {ss:.3e}, PRCG {sp:.3e}",
            rk / hs,
            rk / hp
        ),
    );
}

// ---------------------------------------------------------------- determinism

#[test]
fn determinism() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let spec = r#"{"system": {"kind": "synthetic", "n": 30, "seed": 0}, "orders": [2, 6],
                   "methods": ["krylov", "rational-krylov", "pod", "bt", "srcg", "prcg"]}"#;
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    bench(spec, &a);
    bench(spec, &b);
    let (fa, fb) = (numeric_outputs(&a).unwrap(), numeric_outputs(&b).unwrap());
    if fa.keys().ne(fb.keys()) {
        failures.push("runs wrote different file sets".into());
    }
    let differing: Vec<&String> = fa.iter().filter(|(k, v)| fb.get(*k) != Some(v)).map(|(k, _)| k).collect();
    if !differing.is_empty() {
        failures.push(format!("files differ: {differing:?}"));
    }
    let bytes: usize = fa.values().map(|v| v.len()).sum();
    verdict(
        "determinism",
        Duration::from_secs(600),
        start,
        &failures,
        &format!(
            "two bench runs, {} numeric files ({bytes} bytes) compared, {} differ",
            fa.len(),
            differing.len()
        ),
    );
}
