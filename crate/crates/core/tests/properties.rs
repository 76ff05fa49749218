mod common;

use common::{builtin, hadamard_bound, quadratic};
use nambu_core::brackets::{nambu_bracket, poisson_bracket, BracketContext};
use nambu_core::dynamics::euler_step_bracket_defect;
use nambu_core::embedding::{verify_lift_conditions, LiftSpec};
use nambu_core::fields::{central_difference, gradient, jacobian_determinant, ScalarField};
use nambu_core::systems::{metric_pullback, BuiltinName};
use proptest::prelude::*;

fn coeffs(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, dim * dim + dim)
}

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, dim)
}

fn rows(fields: &[ScalarField], at: &[f64]) -> Vec<Vec<f64>> {
    fields.iter().map(|f| gradient(f, at).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn determinant_flips_under_field_swap(a in coeffs(3), b in coeffs(3), c in coeffs(3), x in point(3)) {
        let fs = [quadratic(a, 3), quadratic(b, 3), quadratic(c, 3)];
        let axes = [0, 1, 2];
        let d = jacobian_determinant(&fs, &x, &axes).unwrap();
        let swapped = [fs[1].clone(), fs[0].clone(), fs[2].clone()];
        let s = jacobian_determinant(&swapped, &x, &axes).unwrap();
        prop_assert!((d + s).abs() <= 1e-12 * hadamard_bound(&rows(&fs, &x)));
    }

    #[test]
    fn determinant_flips_under_axis_swap(a in coeffs(4), b in coeffs(4), x in point(4)) {
        let fs = [quadratic(a, 4), quadratic(b, 4)];
        let d = jacobian_determinant(&fs, &x, &[1, 3]).unwrap();
        let s = jacobian_determinant(&fs, &x, &[3, 1]).unwrap();
        prop_assert!((d + s).abs() <= 1e-12 * hadamard_bound(&rows(&fs, &x)));
    }

    #[test]
    fn determinant_is_linear_in_each_field(a in coeffs(3), b in coeffs(3), c in coeffs(3), k in -3.0..3.0f64, x in point(3)) {
        let fs = [quadratic(a, 3), quadratic(b, 3), quadratic(c, 3)];
        let axes = [0, 1, 2];
        let d = jacobian_determinant(&fs, &x, &axes).unwrap();
        let scaled = [fs[0].clone(), fs[1].scale(k), fs[2].clone()];
        let s = jacobian_determinant(&scaled, &x, &axes).unwrap();
        prop_assert!((s - k * d).abs() <= 1e-10 * k.abs().max(1.0) * hadamard_bound(&rows(&fs, &x)));
    }

    #[test]
    fn nambu_bracket_is_totally_antisymmetric(a in coeffs(6), b in coeffs(6), c in coeffs(6), x in point(6)) {
        let ctx = BracketContext::nambu(2, 3);
        let fs = [quadratic(a, 6), quadratic(b, 6), quadratic(c, 6)];
        let abc = nambu_bracket(&fs, &x, &ctx).unwrap();
        let scale = hadamard_bound(&rows(&fs, &x));
        for (perm, sign) in [([1, 0, 2], -1.0), ([0, 2, 1], -1.0), ([2, 1, 0], -1.0), ([1, 2, 0], 1.0), ([2, 0, 1], 1.0)] {
            let p: Vec<ScalarField> = perm.iter().map(|&i| fs[i].clone()).collect();
            let v = nambu_bracket(&p, &x, &ctx).unwrap();
            prop_assert!((v - sign * abc).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn doublet_nambu_is_poisson(a in coeffs(4), b in coeffs(4), x in point(4)) {
        let (fa, fb) = (quadratic(a, 4), quadratic(b, 4));
        let nb = nambu_bracket(&[fa.clone(), fb.clone()], &x, &BracketContext::nambu(2, 2)).unwrap();
        let pb = poisson_bracket(&fa, &fb, &x, &BracketContext::poisson(2)).unwrap();
        prop_assert!((nb - pb).abs() <= 1e-12 * pb.abs().max(1e-300) || nb == pb);
    }

    #[test]
    fn central_differences_are_second_order(a in 0.5..1.5f64, b in 0.5..1.5f64, x in point(2)) {
        let f = ScalarField::new(2, move |v| (a * v[0] + b * v[1]).exp());
        let e = (a * x[0] + b * x[1]).exp();
        let exact = [a * e, b * e];
        let err = |h: f64| {
            let g = central_difference(&f, &x, h).unwrap();
            (g[0] - exact[0]).abs().max((g[1] - exact[1]).abs())
        };
        let ratio = err(1e-2) / err(5e-3);
        prop_assert!((3.5..=4.5).contains(&ratio), "ratio {}", ratio);
    }

    #[test]
    fn euler_step_bracket_defect_is_second_order(qp in point(2)) {
        prop_assume!(qp[0].abs() + qp[1].abs() > 0.2);
        let b = builtin(BuiltinName::QuadraticTriplet);
        let nsys = b.nambu.unwrap();
        let x = b.map.forward(&qp);
        let d1 = euler_step_bracket_defect(&nsys, &x, 1e-2).unwrap();
        let d2 = euler_step_bracket_defect(&nsys, &x, 5e-3).unwrap();
        let ratio = d1 / d2;
        prop_assert!((3.5..=4.5).contains(&ratio), "ratio {}", ratio);
    }

    #[test]
    fn metric_pullback_scales_quadratically(g in prop::collection::vec(-1.0..1.0f64, 16), k in 0.2..3.0f64, x in point(4)) {
        let change: Vec<ScalarField> = (0..4).map(|i| ScalarField::coordinate(4, i).scale(k)).collect();
        let moved = metric_pullback(&g, &change, &x).unwrap();
        for (m, o) in moved.iter().zip(&g) {
            prop_assert!((m - k * k * o).abs() <= 1e-14 * k * k);
        }
        let ident: Vec<ScalarField> = (0..4).map(|i| ScalarField::coordinate(4, i)).collect();
        prop_assert_eq!(metric_pullback(&g, &ident, &x).unwrap(), g);
    }

    #[test]
    fn graph_lifts_satisfy_the_lift_relation(a in coeffs(3), b in coeffs(3), pts in prop::collection::vec(point(3), 5)) {
        let nsys = builtin(BuiltinName::QuadraticTriplet).nambu.unwrap();
        let spec = LiftSpec::graph(nsys, vec![quadratic(a, 3), quadratic(b, 3)]).unwrap();
        prop_assert!(verify_lift_conditions(&spec, &pts).unwrap() <= 1e-8);
    }
}
