mod common;

use common::{rng, stiefel, symmetric, uniform};
use lqo_core::linalg::{inner, Matrix};
use lqo_core::stiefel::{
    deflate, orthonormality_residual, product_project, product_retract, product_transport,
    project_tangent, retract, tangency_residual, transport, ProductPoint, ProductTangent,
    StiefelTangent,
};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (u64, usize, usize)> {
    (0u64..10_000, 2usize..25).prop_flat_map(|(seed, n)| (Just(seed), Just(n), 1..=n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent_and_self_adjoint((seed, n, r) in dims()) {
        let mut g = rng(seed);
        let v = stiefel(&mut g, n, r);
        let d1 = uniform(&mut g, n, r);
        let d2 = uniform(&mut g, n, r);
        let p1 = project_tangent(&v, &d1).unwrap();
        prop_assert!(tangency_residual(v.matrix(), &p1.xi) < 1e-8 * (r as f64).sqrt());
        let again = project_tangent(&v, &p1.xi).unwrap();
        prop_assert!((&again.xi - &p1.xi).norm() < 1e-12 * p1.xi.norm().max(1.0));
        let p2 = project_tangent(&v, &d2).unwrap();
        prop_assert!((inner(&p1.xi, &d2) - inner(&d1, &p2.xi)).abs() < 1e-10);
        // dense formula D − ½V(VᵀD + DᵀV)
        let vm = v.matrix();
        let oracle = &d1 - vm * (vm.transpose() * &d1 + d1.transpose() * vm) * 0.5;
        prop_assert!((&oracle - &p1.xi).norm() < 1e-12 * oracle.norm().max(1.0));
    }

    #[test]
    fn retraction_stays_on_manifold((seed, n, r) in dims(), scale in 0.0f64..3.0) {
        let mut g = rng(seed);
        let v = stiefel(&mut g, n, r);
        let eta = project_tangent(&v, &uniform(&mut g, n, r)).unwrap().scaled(scale);
        let w = retract(&v, &eta).unwrap();
        prop_assert!(orthonormality_residual(w.matrix()) < 1e-10 * (r as f64).sqrt());
    }

    #[test]
    fn transport_is_tangent_and_linear((seed, n, r) in dims()) {
        let mut g = rng(seed);
        let v = stiefel(&mut g, n, r);
        let tangent = |g: &mut _| project_tangent(&v, &uniform(g, n, r)).unwrap();
        let eta = tangent(&mut g);
        let x1 = tangent(&mut g);
        let x2 = tangent(&mut g);
        let w = retract(&v, &eta).unwrap();
        let t1 = transport(&v, &eta, &x1).unwrap();
        let t2 = transport(&v, &eta, &x2).unwrap();
        prop_assert!(tangency_residual(w.matrix(), &t1.xi) < 1e-8 * t1.norm().max(1.0));
        let combo = transport(&v, &eta, &x1.scaled(2.0).add_scaled(-0.5, &x2)).unwrap();
        let expect = t1.scaled(2.0).add_scaled(-0.5, &t2);
        prop_assert!((&combo.xi - &expect.xi).norm() < 1e-10 * expect.norm().max(1.0));
        let at_zero = transport(&v, &StiefelTangent::zeros(n, r), &x1).unwrap();
        prop_assert!((&at_zero.xi - &x1.xi).norm() < 1e-10 * x1.norm().max(1.0));
    }

    #[test]
    fn deflation_never_exceeds_source_norm(seed in 0u64..10_000, source in 0.0f64..5.0) {
        let mut g = rng(seed);
        let t = StiefelTangent { xi: uniform(&mut g, 6, 3) * 3.0 };
        let d = deflate(&t, source);
        // equality up to the rounding of recomputing a norm
        prop_assert!(d.norm() <= source * (1.0 + 4.0 * f64::EPSILON));
        prop_assert!(d.norm() <= t.norm());
        // direction preserved
        if d.norm() > 0.0 {
            let cos = d.inner(&t) / (d.norm() * t.norm());
            prop_assert!((cos - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn product_operations_act_componentwise((seed, n, r) in dims()) {
        let mut g = rng(seed);
        let p = ProductPoint::new(stiefel(&mut g, n, r), uniform(&mut g, r, 2), uniform(&mut g, 1, r), symmetric(&mut g, r))
            .unwrap();
        let raw = ProductTangent {
            u: StiefelTangent { xi: uniform(&mut g, n, r) },
            b: uniform(&mut g, r, 2),
            c: uniform(&mut g, 1, r),
            m: uniform(&mut g, r, r),
        };
        let d = product_project(&p, &raw).unwrap();
        prop_assert_eq!(&d.b, &raw.b);
        prop_assert_eq!(&d.c, &raw.c);
        prop_assert_eq!(&d.m, &((&raw.m + raw.m.transpose()) * 0.5));
        prop_assert_eq!(&d.m, &d.m.transpose());
        let metric = d.u.inner(&d.u) + inner(&d.b, &d.b) + inner(&d.c, &d.c) + inner(&d.m, &d.m);
        prop_assert!((d.inner(&d) - metric).abs() <= 1e-12 * metric);
        let q = product_retract(&p, &d).unwrap();
        prop_assert!(orthonormality_residual(q.u.matrix()) < 1e-10 * (r as f64).sqrt());
        prop_assert_eq!(&q.b, &(&p.b + &d.b));
        prop_assert_eq!(&q.m, &q.m.transpose());
        let moved = product_transport(&p, &d, &d).unwrap();
        prop_assert_eq!(&moved.b, &d.b);
        prop_assert_eq!(&moved.m, &d.m);
        prop_assert!(tangency_residual(q.u.matrix(), &moved.u.xi) < 1e-8 * moved.u.norm().max(1.0));
    }
}

#[test]
fn retraction_is_first_order() {
    let mut g = rng(21);
    let v = stiefel(&mut g, 30, 6);
    let xi = project_tangent(&v, &uniform(&mut g, 30, 6)).unwrap();
    let slope_err = |t: f64| {
        let w = retract(&v, &xi.scaled(t)).unwrap();
        ((w.matrix() - v.matrix()) / t - &xi.xi).norm()
    };
    let (e1, e2) = (slope_err(1e-3), slope_err(1e-4));
    assert!(e1 < 1e-2 * xi.norm());
    // O(t): shrinking t tenfold shrinks the error roughly tenfold
    assert!(e2 < e1 / 5.0, "{e1:e} {e2:e}");
}

#[test]
fn normal_directions_project_to_zero() {
    let mut g = rng(22);
    let v = stiefel(&mut g, 30, 6);
    let s: Matrix = symmetric(&mut g, 6);
    let p = project_tangent(&v, &(v.matrix() * s)).unwrap();
    assert!(p.norm() < 1e-12);
}
