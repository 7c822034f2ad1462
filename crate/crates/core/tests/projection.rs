use profit_core::param::{axpy, dot, orthogonal_reject};
use profit_core::{ParamVector, DEGENERATE_EPS};
use proptest::prelude::*;

fn vectors(max_dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_dim).prop_flat_map(|n| {
        (prop::collection::vec(-1e3..1e3f64, n), prop::collection::vec(-1e3..1e3f64, n))
    })
}

fn pv(v: &[f64]) -> ParamVector {
    ParamVector::from_slice(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rejection_is_orthogonal((g, d) in vectors(64)) {
        let (g, d) = (pv(&g), pv(&d));
        prop_assume!(d.norm_sq() >= DEGENERATE_EPS);
        let r = orthogonal_reject(&g, &d).unwrap();
        prop_assert!(!r.degenerate);
        let ip = r.vector.dot(&d).unwrap().abs();
        prop_assert!(ip <= 1e-10 * g.norm() * d.norm(), "<g', d> = {ip:e}");
    }

    #[test]
    fn rejection_is_idempotent((g, d) in vectors(64)) {
        let (g, d) = (pv(&g), pv(&d));
        let once = orthogonal_reject(&g, &d).unwrap().vector;
        let twice = orthogonal_reject(&once, &d).unwrap().vector;
        let scale = g.norm().max(1.0);
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn rejection_never_expands((g, d) in vectors(64)) {
        let (g, d) = (pv(&g), pv(&d));
        let r = orthogonal_reject(&g, &d).unwrap().vector;
        prop_assert!(r.norm() <= g.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn dot_is_symmetric_and_bilinear((a, b) in vectors(32), alpha in -10.0..10.0f64, (c, _) in vectors(32)) {
        let n = a.len().min(c.len());
        let (a, b, c) = (pv(&a[..n]), pv(&b[..n]), pv(&c[..n]));
        prop_assert_eq!(dot(&a, &b).unwrap(), dot(&b, &a).unwrap());
        // <alpha a + c, b> = alpha <a, b> + <c, b>
        let lhs = dot(&axpy(alpha, &a, &c).unwrap(), &b).unwrap();
        let rhs = alpha * dot(&a, &b).unwrap() + dot(&c, &b).unwrap();
        let scale = (alpha.abs() * a.norm() + c.norm()) * b.norm();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1.0));
    }
}

#[test]
fn parallel_gradient_is_removed_completely() {
    let d = pv(&[1e-3, -2e-3, 5e-4]);
    let g = d.scaled(-7.0).unwrap();
    let r = orthogonal_reject(&g, &d).unwrap();
    assert!(r.vector.norm() <= 1e-15 * g.norm());
}

#[test]
fn below_threshold_displacement_is_degenerate() {
    let g = pv(&[1.0, 2.0]);
    let r = orthogonal_reject(&g, &pv(&[1e-13, 0.0])).unwrap();
    assert!(r.degenerate);
    assert_eq!(r.vector, g);
}
