mod common;

use common::{builtin, Rng};
use nambu_core::dynamics::{integrate, IntegratorConfig};
use nambu_core::embedding::{
    lift_nambu_system, verify_lift_conditions, verify_lift_constancy, LiftError, LiftSpec,
};
use nambu_core::fields::{Point, ScalarField};
use nambu_core::systems::BuiltinName;

fn x2_plus_z2() -> ScalarField {
    ScalarField::with_gradient(3, |x| x[0] * x[0] + x[2] * x[2], |x, g| {
        g[0] = 2.0 * x[0];
        g[1] = 0.0;
        g[2] = 2.0 * x[2];
    })
}

fn xy() -> ScalarField {
    ScalarField::with_gradient(3, |x| x[0] * x[1], |x, g| {
        g[0] = x[1];
        g[1] = x[0];
        g[2] = 0.0;
    })
}

fn samples(seed: u64) -> Vec<Vec<f64>> {
    let b = builtin(BuiltinName::QuadraticTriplet);
    Rng::new(seed).points(20, 2, -2.0, 2.0).iter().map(|qp| b.map.forward(qp)).collect()
}

#[test]
fn lifted_flow_projects_onto_the_source_flow() {
    let nsys = builtin(BuiltinName::QuadraticTriplet).nambu.unwrap();
    let spec = LiftSpec::graph(nsys.clone(), vec![x2_plus_z2()]).unwrap();
    let lifted = lift_nambu_system(&spec, &samples(51)).unwrap();
    let x0 = vec![0.3, 0.5, 0.4];
    let cfg = IntegratorConfig::rk4(1e-3, 3000);
    let small = integrate(&nsys, &Point::single(x0.clone()), &cfg, &[]).unwrap();
    let big = integrate(&lifted, &Point::single(spec.lift_point(&x0)), &cfg, lifted.monitors()).unwrap();
    assert!(big.map_states(|y| spec.project_point(y)).sup_distance(&small).unwrap() <= 1e-8);
    for m in lifted.monitors() {
        assert!(big.max_drift(&m.name).unwrap() <= 1e-8, "{}", m.name);
    }
}

#[test]
fn two_single_lifts_equal_one_double_lift() {
    let nsys = builtin(BuiltinName::QuadraticTriplet).nambu.unwrap();
    let pts = samples(52);
    let once = LiftSpec::graph(nsys.clone(), vec![x2_plus_z2()]).unwrap();
    let first = lift_nambu_system(&once, &pts).unwrap();
    let twice = LiftSpec::graph(first, vec![xy().embed(4, &[0, 1, 2])]).unwrap();
    let lifted_pts: Vec<Vec<f64>> = pts.iter().map(|x| once.lift_point(x)).collect();
    let second = lift_nambu_system(&twice, &lifted_pts).unwrap();
    let both = LiftSpec::graph(nsys, vec![x2_plus_z2(), xy()]).unwrap();
    let direct = lift_nambu_system(&both, &pts).unwrap();

    let x0 = vec![0.3, 0.5, 0.4];
    let y0 = both.lift_point(&x0);
    assert_eq!(twice.lift_point(&once.lift_point(&x0)), y0);
    let cfg = IntegratorConfig::rk4(1e-3, 2000);
    let a = integrate(&second, &Point::single(y0.clone()), &cfg, &[]).unwrap();
    let b = integrate(&direct, &Point::single(y0), &cfg, &[]).unwrap();
    assert!(a.sup_distance(&b).unwrap() <= 1e-7);
}

#[test]
fn candidates_are_constant_against_probes() {
    let nsys = builtin(BuiltinName::QuadraticTriplet).nambu.unwrap();
    let spec = LiftSpec::graph(nsys, vec![x2_plus_z2()]).unwrap();
    let mut rng = Rng::new(53);
    let probes: Vec<ScalarField> = (0..2).map(|_| rng.quadratic(4)).collect();
    assert!(verify_lift_constancy(&spec, &probes, &samples(54)).unwrap() <= 1e-8);
    assert!(matches!(
        verify_lift_constancy(&spec, &probes[..1], &samples(54)),
        Err(LiftError::Invalid(_))
    ));
}

#[test]
fn enough_brackets_survive() {
    let nsys = builtin(BuiltinName::QuadraticTriplet).nambu.unwrap();
    for extras in [vec![x2_plus_z2()], vec![x2_plus_z2(), xy()]] {
        let spec = LiftSpec::graph(nsys.clone(), extras).unwrap();
        for x in samples(55) {
            assert!(spec.nonvanishing_brackets(&x, 1e-8).unwrap() > spec.r());
        }
    }
}

#[test]
fn mismatched_shapes_are_rejected() {
    let nsys = builtin(BuiltinName::QuadraticTriplet).nambu.unwrap();
    let maps: Vec<ScalarField> = (0..3).map(|i| ScalarField::coordinate(3, i)).collect();
    let inverse: Vec<ScalarField> = (0..3).map(|i| ScalarField::coordinate(4, i)).collect();
    let bad = LiftSpec::new(nsys.clone(), maps, inverse, vec![ScalarField::coordinate(4, 3)]);
    assert!(matches!(bad, Err(LiftError::Invalid(_))));
    let spec = LiftSpec::graph(nsys, vec![x2_plus_z2()]).unwrap();
    assert!(verify_lift_conditions(&spec, &samples(56)).unwrap() <= 1e-8);
    assert!(matches!(lift_nambu_system(&spec, &[]), Err(LiftError::Invalid(_))));
}
