mod common;

use common::{builtin, Rng};
use nambu_core::brackets::{nambu_bracket, poisson_bracket, verify_jacobian_decomposition, BracketContext};
use nambu_core::dynamics::nambu_rhs;
use nambu_core::fields::{gradient, jacobian_determinant, ScalarField};
use nambu_core::systems::{
    construct_conjugate_coordinates, gauge_reduce_relativistic, metric_pullback, verify_constraint_constancy,
    verify_generalized_conditions, verify_induced_constraints, BuiltinName, ConjugatePath, EnergyBranch,
    GeneralizedNambuSystem, MetricField, SamplePoints, SystemError, VariableMap,
};

#[test]
fn pulled_back_constraint_has_zero_gradient() {
    let b = builtin(BuiltinName::QuadraticTriplet);
    let g = b.map.pullback(&b.local_constraints[0]);
    let grad = gradient(&g, &[1.0, 1.0]).unwrap();
    assert!(grad.iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn area_element_of_the_quadratic_map() {
    // d(x, y)/d(q, p) = qp/2 = z
    let b = builtin(BuiltinName::QuadraticTriplet);
    let d = jacobian_determinant(&b.map.outputs()[..2], &[1.0, 1.0], &[0, 1]).unwrap();
    assert!((d - 0.5).abs() < 1e-15);
}

#[test]
fn quadratic_map_brackets() {
    let b = builtin(BuiltinName::QuadraticTriplet);
    let ctx = BracketContext::poisson(1);
    let [x, y, z] = [0, 1, 2].map(|i| b.map.outputs()[i].clone());
    assert!((poisson_bracket(&x, &y, &[1.0, 1.0], &ctx).unwrap() - 0.5).abs() < 1e-15);
    assert!((poisson_bracket(&y, &z, &[2.0, 0.0], &ctx).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn jacobian_splits() {
    let mut rng = Rng::new(11);
    let f3: Vec<ScalarField> = (0..3).map(|_| rng.quadratic(3)).collect();
    let f4: Vec<ScalarField> = (0..4).map(|_| rng.quadratic(4)).collect();
    for _ in 0..10 {
        assert!(verify_jacobian_decomposition(&f3, &rng.point(3, -2.0, 2.0), (1, 2)).unwrap() <= 1e-8);
        assert!(verify_jacobian_decomposition(&f4, &rng.point(4, -2.0, 2.0), (2, 2)).unwrap() <= 1e-8);
    }
}

#[test]
fn nambu_time_derivative_equals_poisson() {
    // d f/dt from {f, H, G} on multiplets against {f o map, H} on (q, p)
    let b = builtin(BuiltinName::QuadraticTriplet);
    let nsys = b.nambu.as_ref().unwrap();
    let mut rng = Rng::new(12);
    let pctx = BracketContext::poisson(1);
    for _ in 0..50 {
        let f = rng.quadratic(3);
        let qp = rng.point(2, -2.0, 2.0);
        let x = b.map.forward(&qp);
        let nb = nambu_bracket(&[f.clone(), nsys.hamiltonian().clone(), nsys.constraints()[0].clone()], &x, nsys.context())
            .unwrap();
        let pb = poisson_bracket(&b.map.pullback(&f), b.hamiltonian.hamiltonian(), &qp, &pctx).unwrap();
        assert!((nb - pb).abs() <= 1e-8, "{nb} {pb}");
    }
}

#[test]
fn induced_constraint_examples() {
    let mut rng = Rng::new(13);
    let a = builtin(BuiltinName::QuadraticTriplet);
    let pts = SamplePoints::Canonical(rng.points(100, 2, -2.0, 2.0));
    assert!(verify_induced_constraints(&a.map, &a.local_constraints, &pts).unwrap() <= 1e-10);
    let wrong = ScalarField::coordinate(3, 1);
    assert!(verify_induced_constraints(&a.map, &[wrong], &pts).unwrap() >= 0.1);

    let b = builtin(BuiltinName::QuartetExB);
    let pts = SamplePoints::Canonical(rng.points(20, 2, -2.0, 2.0));
    assert!(verify_induced_constraints(&b.map, &b.local_constraints, &pts).unwrap() <= 1e-8);
}

#[test]
fn multiplet_samples_go_through_the_inverse() {
    let a = builtin(BuiltinName::QuadraticTriplet);
    let mut rng = Rng::new(14);
    let xs = rng.points(20, 2, -2.0, 2.0).iter().map(|qp| a.map.forward(qp)).collect();
    let r = verify_induced_constraints(&a.map, &a.local_constraints, &SamplePoints::Multiplet(xs)).unwrap();
    assert!(r <= 1e-10);
}

#[test]
fn constancy_examples() {
    let a = builtin(BuiltinName::QuadraticTriplet);
    let mut rng = Rng::new(15);
    let pts = rng.points(50, 2, -2.0, 2.0);
    let q = ScalarField::coordinate(2, 0);
    let p = ScalarField::coordinate(2, 1);
    let probes = [q.clone(), p.clone(), q.mul(&p), q.mul(&q)];
    assert!(verify_constraint_constancy(&a.local_constraints[0], &probes, &a.map, &pts).unwrap() <= 1e-10);
    let itself = a.map.pullback(&a.local_constraints[0]);
    assert_eq!(verify_constraint_constancy(&a.local_constraints[0], &[itself], &a.map, &pts).unwrap(), 0.0);

    let b = builtin(BuiltinName::QuartetExB);
    let probes: Vec<ScalarField> = (0..4).map(|_| rng.quadratic(2)).collect();
    assert!(verify_constraint_constancy(&b.local_constraints[0], &probes, &b.map, &pts).unwrap() <= 1e-8);
}

#[test]
fn passing_induced_check_implies_constancy() {
    let mut rng = Rng::new(16);
    let pts = rng.points(30, 2, -2.0, 2.0);
    let probes: Vec<ScalarField> = (0..3).map(|_| rng.quadratic(2)).collect();
    for name in [BuiltinName::QuadraticTriplet, BuiltinName::QuartetExB, BuiltinName::HarmonicOscillatorTriplet] {
        let b = builtin(name);
        let induced = verify_induced_constraints(&b.map, &b.local_constraints, &SamplePoints::Canonical(pts.clone())).unwrap();
        assert!(induced <= 1e-8);
        for g in &b.local_constraints {
            assert!(verify_constraint_constancy(g, &probes, &b.map, &pts).unwrap() <= 1e-7);
        }
    }
}

#[test]
fn gauge_terms_leave_the_flow_unchanged() {
    let mut rng = Rng::new(17);
    for name in [BuiltinName::QuadraticTriplet, BuiltinName::QuartetExB, BuiltinName::HarmonicOscillatorTriplet] {
        let b = builtin(name);
        let nsys = b.nambu.clone().unwrap();
        let dim = nsys.dim();
        let lambdas: Vec<ScalarField> = nsys.constraints().iter().map(|_| rng.quadratic(dim)).collect();
        let gauged = nsys.clone().with_gauge_terms(lambdas).unwrap();
        for qp in rng.points(20, 2, -2.0, 2.0) {
            let x = b.map.forward(&qp);
            let u = nambu_rhs(&nsys, &x).unwrap();
            let v = nambu_rhs(&gauged, &x).unwrap();
            for (a, c) in u.iter().zip(&v) {
                assert!((a - c).abs() <= 1e-9, "{name}: {a} {c}");
            }
        }
    }
}

#[test]
fn gauge_condition_is_admissible() {
    let r = gauge_reduce_relativistic(1.0, 1.0, EnergyBranch::Negative).unwrap();
    let mut rng = Rng::new(18);
    for _ in 0..20 {
        let ext = r.extend(&rng.point(6, -2.0, 2.0));
        let d = r.constraints.bracket_determinant(&ext).unwrap();
        // {p^mu p_mu, q^0} pairs the mass shell with the time coordinate
        assert!((d.abs() - 2.0 * ext[1].abs()).abs() <= 1e-12);
        assert!(d.abs() >= 2.0);
    }
}

#[test]
fn relativistic_relation_families() {
    let mut rng = Rng::new(19);
    let pts = rng.points(100, 6, -2.0, 2.0);
    let a = builtin(BuiltinName::RelativisticA);
    let c = builtin(BuiltinName::RelativisticC);
    assert!(verify_generalized_conditions(a.generalized.as_ref().unwrap(), &a.map, &pts).unwrap().max() <= 1e-10);
    assert!(verify_generalized_conditions(c.generalized.as_ref().unwrap(), &c.map, &pts).unwrap().max() <= 1e-8);
}

#[test]
fn wrong_metric_is_detected() {
    let c = builtin(BuiltinName::RelativisticC);
    let gc = c.generalized.as_ref().unwrap();
    let plain = GeneralizedNambuSystem::new(
        6,
        1,
        gc.hamiltonian().clone(),
        gc.constraints().to_vec(),
        MetricField::canonical_pairs(3, 7),
    )
    .unwrap();
    let mut rng = Rng::new(20);
    let r = verify_generalized_conditions(&plain, &c.map, &rng.points(20, 6, -2.0, 2.0)).unwrap();
    assert!(r.max() >= 0.1);
}

#[test]
fn doublet_without_constraints() {
    // no z block: the metric is 1/2 of the canonical bracket matrix
    let map = VariableMap::new(
        1,
        nambu_core::fields::Layout::single(2),
        vec![ScalarField::coordinate(2, 0), ScalarField::coordinate(2, 1)],
        None,
    )
    .unwrap();
    let h = ScalarField::new(2, |v| 0.5 * (v[0] * v[0] + v[1] * v[1]));
    let g = GeneralizedNambuSystem::new(2, 0, h, Vec::new(), MetricField::canonical_pairs(1, 2)).unwrap();
    let mut rng = Rng::new(21);
    let r = verify_generalized_conditions(&g, &map, &rng.points(20, 2, -2.0, 2.0)).unwrap();
    assert!(r.max() <= 1e-10);
}

#[test]
fn metric_law_against_direct_brackets() {
    let a = builtin(BuiltinName::RelativisticA);
    let metric = a.generalized.as_ref().unwrap().metric().clone();
    let mut rng = Rng::new(22);
    let change: Vec<ScalarField> = (0..6).map(|_| rng.quadratic(6).scale(0.1).add(&ScalarField::constant(6, 0.0))).collect();
    let change: Vec<ScalarField> = change
        .into_iter()
        .enumerate()
        .map(|(i, f)| f.add(&ScalarField::coordinate(6, i)))
        .collect();
    let composed: Vec<ScalarField> = change.iter().map(|f| f.compose(&a.map.outputs()[..6])).collect();
    let ctx = BracketContext::poisson(3);
    for qp in rng.points(20, 6, -1.0, 1.0) {
        let w = a.map.forward(&qp);
        let moved = match metric_pullback(&metric.eval(&w), &change, &w[..6]) {
            Ok(m) => m,
            Err(SystemError::NonInvertibleChange(_)) => continue,
            Err(e) => panic!("{e}"),
        };
        for i in 0..6 {
            for j in 0..6 {
                let direct = 0.5 * poisson_bracket(&composed[i], &composed[j], &qp, &ctx).unwrap();
                assert!((moved[i * 6 + j] - direct).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn singular_change_is_rejected() {
    let g = vec![0.0, 0.5, -0.5, 0.0];
    let change = vec![ScalarField::coordinate(2, 0), ScalarField::coordinate(2, 0)];
    assert!(matches!(
        metric_pullback(&g, &change, &[0.3, 0.1]),
        Err(SystemError::NonInvertibleChange(_))
    ));
}

#[test]
fn conjugate_coordinates_of_construction_c() {
    let c = builtin(BuiltinName::RelativisticC);
    let gsys = c.generalized.as_ref().unwrap();
    let paths: Vec<ConjugatePath> = (0..3)
        .map(|i| ConjugatePath {
            target: i,
            partner: i + 3,
            axis: 2 * i,
            origin: 0.0,
            lower: -3.0,
            upper: 3.0,
            nodes: 65,
        })
        .collect();
    let xs = construct_conjugate_coordinates(gsys.constraints(), gsys.metric(), &[6], c.map.outputs(), &paths).unwrap();
    let mut rng = Rng::new(23);
    for qp in rng.points(20, 6, -2.0, 2.0) {
        let w = c.map.forward(&qp);
        for (i, x) in xs.iter().enumerate() {
            assert!((x.eval(&qp).unwrap() - w[i]).abs() <= 1e-10);
        }
    }
}
