use std::fs;

use lqo_core::lqo::relative_h2_error;
use lqo_core::mm;
use lqo_mor::bench::{numeric_outputs, run_benchmark, BenchmarkSpec};
use lqo_mor::config::Method;
use lqo_mor::expr::Expr;
use lqo_mor::generators::{gen_heat, gen_synthetic};
use lqo_mor::io::{load_snapshots, load_system, save_snapshots, save_system, SystemDescriptor};
use lqo_mor::methods::pod_snapshots;
use proptest::prelude::*;

fn small_spec() -> BenchmarkSpec {
    serde_json::from_str(
        r#"{"system": {"kind": "synthetic", "n": 14, "seed": 3}, "orders": [2, 4],
            "methods": ["krylov", "rational-krylov", "pod", "bt", "srcg", "prcg"],
            "config": {"optimizer": {"k_max": 25}},
            "simulation": {"input": "exp(sin(2*t))", "t_end": 3, "steps": 60}}"#,
    )
    .unwrap()
}

#[test]
fn table_is_complete_and_reloaded_models_reproduce_it() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec();
    let table = run_benchmark(&spec, tmp.path()).unwrap();
    assert_eq!(table.rows.len(), spec.cells().len());
    let (full, desc) = load_system(&tmp.path().join("system")).unwrap();
    assert_eq!(desc.kind, "synthetic");
    assert_eq!(full, gen_synthetic(14, 3).unwrap());
    for (method, r) in spec.cells() {
        let row = table.get(method, r).unwrap();
        let err = row.rel_h2_error.expect("every cell succeeds");
        assert!(err >= 0.0);
        let dir = tmp.path().join("cells").join(format!("{method}_r{r}"));
        let (red, _) = load_system(&dir).unwrap();
        let again = relative_h2_error(&full, &red).unwrap();
        assert!((again - err).abs() <= 1e-12 * err.max(f64::MIN_POSITIVE), "{method} r={r}: {again} vs {err}");
        assert_eq!(dir.join("trace.csv").exists(), method.is_optimizer());
        assert_eq!(row.iterations == 0, !method.is_optimizer() || row.termination == "converged");
        let sim = fs::read_to_string(dir.join("simulation.csv")).unwrap();
        assert_eq!(sim.lines().count(), 62);
    }
    // the optimizers never end above their starting point
    for r in [2, 4] {
        let start = table.get(Method::Krylov, r).unwrap().rel_h2_error.unwrap();
        for m in [Method::Srcg, Method::Prcg] {
            assert!(table.get(m, r).unwrap().rel_h2_error.unwrap() <= start * (1.0 + 1e-9));
        }
    }
    let csv = fs::read_to_string(tmp.path().join("table.csv")).unwrap();
    assert_eq!(csv, table.to_csv());
    assert!(load_snapshots(&tmp.path().join("snapshots")).unwrap().states.ncols() == 100);
}

#[test]
fn reruns_are_byte_identical_apart_from_the_clock() {
    let spec = small_spec();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_benchmark(&spec, a.path()).unwrap();
    run_benchmark(&spec, b.path()).unwrap();
    let (fa, fb) = (numeric_outputs(a.path()).unwrap(), numeric_outputs(b.path()).unwrap());
    assert!(fa.contains_key("cells/srcg_r2/trace.csv"));
    assert!(!fa.contains_key("timing.csv"));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{k} differs");
    }
}

#[test]
fn initialization_only_spec_runs_no_optimizer() {
    let tmp = tempfile::tempdir().unwrap();
    let spec: BenchmarkSpec = serde_json::from_str(
        r#"{"system": {"kind": "heat", "n": 30}, "orders": [2, 4], "methods": ["krylov"],
            "simulation": {"input": "100*sin(2*t)", "t_end": 0.5, "steps": 20}}"#,
    )
    .unwrap();
    let table = run_benchmark(&spec, tmp.path()).unwrap();
    assert!(table.rows.iter().all(|r| r.iterations == 0 && r.termination == "direct"));
    assert!(!tmp.path().join("cells/krylov_r2/trace.csv").exists());
    let desc = fs::read_to_string(tmp.path().join("system/system.json")).unwrap();
    assert!(desc.contains("\"output_node\": 14"));
}

#[test]
fn heat_system_round_trips_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = gen_heat(17).unwrap();
    save_system(tmp.path(), &sys, &SystemDescriptor::new("heat", &sys)).unwrap();
    let (back, desc) = load_system(tmp.path()).unwrap();
    assert_eq!(back, sys);
    assert_eq!((desc.order, desc.inputs), (17, 1));
    let snap = pod_snapshots(&sys, &lqo_mor::config::SignalSettings::new("100*sin(2*t)", 0.1, 9)).unwrap();
    save_snapshots(&tmp.path().join("snap"), &snap).unwrap();
    let again = load_snapshots(&tmp.path().join("snap")).unwrap();
    assert_eq!(again.states, snap.states);
    assert_eq!(again.times, snap.times);
    assert_eq!(again.input, "100*sin(2*t)");
}

#[test]
fn mismatched_descriptor_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = gen_heat(5).unwrap();
    let mut desc = SystemDescriptor::new("heat", &sys);
    desc.order = 6;
    save_system(tmp.path(), &sys, &desc).unwrap();
    assert_eq!(load_system(tmp.path()).unwrap_err().exit_code(), 2);
    mm::write(tmp.path().join("A.mtx"), &lqo_core::Matrix::zeros(2, 3)).unwrap();
    assert_eq!(load_system(tmp.path()).unwrap_err().exit_code(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthetic_family_is_dissipative(seed in any::<u64>(), n in 2usize..25) {
        let sys = gen_synthetic(n, seed).unwrap();
        let herm = sys.a() + sys.a().transpose();
        prop_assert!(herm.symmetric_eigen().eigenvalues.max() < 0.0);
        prop_assert_eq!(sys, gen_synthetic(n, seed).unwrap());
    }

    #[test]
    fn heat_weights_sum_to_one(n in 2usize..400) {
        let m = gen_heat(n).unwrap().m().clone();
        let w = m[(0, 0)];
        prop_assert!(m.diagonal().iter().all(|&d| d == w));
        prop_assert_eq!(m.sum(), m.diagonal().sum());
        // exact trace n·w differs from 1 by at most half an ulp
        prop_assert!((n as f64).mul_add(w, -1.0).abs() <= 0.5 * f64::EPSILON);
    }

    #[test]
    fn expressions_follow_arithmetic(a in -1e3f64..1e3, b in 0.5f64..1e3, t in -10.0f64..10.0) {
        let (fa, fb) = (format!("{a:?}"), format!("{b:?}"));
        let sum = Expr::parse(&format!("({fa}) + {fb}*t")).unwrap().eval(t);
        prop_assert_eq!(sum, a + b * t);
        let quo = Expr::parse(&format!("-({fa})/{fb} - t^2")).unwrap().eval(t);
        prop_assert_eq!(quo, -a / b - t.powf(2.0));
        let f = Expr::parse(&format!("exp(sin({fb}*t))")).unwrap().eval(t);
        prop_assert_eq!(f, (b * t).sin().exp());
    }
}
