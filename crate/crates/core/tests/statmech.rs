mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::{builtin, Rng};
use nambu_core::statmech::{
    estimate_partition_hamiltonian, estimate_partition_nambu, estimate_partition_nambu_with, normalization_factor,
    BranchFn, BranchSolver, ChunkRunner, ChunkStats, Domain, Estimate, PartitionConfig, StatError,
};
use nambu_core::systems::{make_builtin, BuiltinName, BuiltinParams};

fn triplet_solver() -> BranchSolver {
    let b = builtin(BuiltinName::QuadraticTriplet);
    BranchSolver::quadratic_triplet(1, b.local_constraints[0].clone(), Some(2.0)).unwrap()
}

fn nambu_quadrature(beta: f64) -> Estimate {
    let b = builtin(BuiltinName::QuadraticTriplet);
    let ymax = 40.0 / beta;
    estimate_partition_nambu(
        b.nambu.as_ref().unwrap(),
        &triplet_solver(),
        &PartitionConfig::quadrature(beta, Domain::Bounds(vec![(0.0, ymax), (-ymax, ymax)])),
    )
    .unwrap()
}

fn hamiltonian_quadrature(beta: f64) -> Estimate {
    let b = builtin(BuiltinName::QuadraticTriplet);
    estimate_partition_hamiltonian(&b.hamiltonian, &PartitionConfig::quadrature(beta, Domain::Radius(12.0))).unwrap()
}

#[test]
fn hamiltonian_partition_function() {
    for beta in [1.0, 2.0] {
        let z = hamiltonian_quadrature(beta);
        let exact = 2.0 * PI / beta;
        assert!((z.value - exact).abs() <= 5e-3 * exact);
        assert!(z.tail_bound.unwrap() <= 1e-20);
    }
}

#[test]
fn delta_resolved_partition_function() {
    // int_{y > |x|} 2 e^{-2 beta y} / sqrt(y^2 - x^2) dx dy = pi / beta
    for beta in [0.5, 1.0, 2.0] {
        let z = nambu_quadrature(beta);
        assert!((z.value - PI / beta).abs() <= 1e-2 * PI / beta, "{} {}", beta, z.value);
        assert_eq!(z.branch_count, 2);
    }
}

#[test]
fn measured_ratio_is_beta_independent() {
    let solver = triplet_solver();
    let ratios: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&beta| normalization_factor(nambu_quadrature(beta), hamiltonian_quadrature(beta), &solver).unwrap())
        .map(|n| {
            assert_eq!(n.predicted, 2);
            n.ratio
        })
        .collect();
    for r in &ratios {
        assert!((r - 0.5).abs() <= 1e-3, "{r}");
    }
}

#[test]
fn single_branch_predicts_one() {
    let b = builtin(BuiltinName::QuadraticTriplet);
    let plus: BranchFn = Arc::new(|v: &[f64]| (v[0] > v[1].abs()).then(|| vec![(v[0] * v[0] - v[1] * v[1]).sqrt()]));
    let s = BranchSolver::new(1, 3, vec![1, 0], vec![2], vec![b.local_constraints[0].clone()], vec![plus]).unwrap();
    assert_eq!(s.predicted_branch_count(), 1);
    assert_eq!(triplet_solver().predicted_branch_count(), 2);
    let two = BranchSolver::quadratic_triplet(2, b.local_constraints[0].clone(), None).unwrap();
    assert_eq!(two.predicted_branch_count(), 4);
    assert_eq!(two.integrated_dim(), 4);
}

#[test]
fn monte_carlo_agrees_with_quadrature() {
    let b = builtin(BuiltinName::QuadraticTriplet);
    let mc_h = estimate_partition_hamiltonian(
        &b.hamiltonian,
        &PartitionConfig::monte_carlo(1.0, Domain::Radius(8.0), 200_000, 3),
    )
    .unwrap();
    let q_h = hamiltonian_quadrature(1.0);
    assert!((mc_h.value - q_h.value).abs() <= 3.0 * mc_h.stderr, "{mc_h:?}");

    let mc_n = estimate_partition_nambu(
        b.nambu.as_ref().unwrap(),
        &triplet_solver(),
        &PartitionConfig::monte_carlo(1.0, Domain::Bounds(vec![(0.0, 12.0), (-12.0, 12.0)]), 200_000, 3),
    )
    .unwrap();
    let q_n = nambu_quadrature(1.0);
    assert!((mc_n.value - q_n.value).abs() <= 3.0 * mc_n.stderr, "{mc_n:?}");
    let eps = mc_n.epsilon.unwrap();
    assert!(mc_n.excluded_mass_bound.unwrap() <= 1e-3 * mc_n.value, "{eps}");
}

struct Reversed;

impl ChunkRunner for Reversed {
    fn run(&self, chunks: usize, job: &(dyn Fn(usize) -> ChunkStats + Sync)) -> Vec<ChunkStats> {
        let mut out: Vec<ChunkStats> = (0..chunks).rev().map(job).collect();
        out.reverse();
        out
    }
}

#[test]
fn monte_carlo_is_deterministic() {
    let b = builtin(BuiltinName::QuadraticTriplet);
    let nsys = b.nambu.as_ref().unwrap();
    let solver = triplet_solver();
    let cfg = PartitionConfig::monte_carlo(1.0, Domain::Bounds(vec![(0.0, 12.0), (-12.0, 12.0)]), 50_000, 11);
    let a = estimate_partition_nambu(nsys, &solver, &cfg).unwrap();
    let again = estimate_partition_nambu(nsys, &solver, &cfg).unwrap();
    let rev = estimate_partition_nambu_with(nsys, &solver, &cfg, &Reversed).unwrap();
    assert_eq!(a.value.to_bits(), again.value.to_bits());
    assert_eq!(a.value.to_bits(), rev.value.to_bits());
    assert_eq!(a.stderr.to_bits(), rev.stderr.to_bits());
    let other = estimate_partition_nambu(nsys, &solver, &PartitionConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a.value, other.value);
}

#[test]
fn branches_satisfy_the_constraint() {
    let mut rng = Rng::new(41);
    let samples = rng.points(10_000, 2, -5.0, 5.0);
    assert!(triplet_solver().consistency_residual(&samples) <= 1e-12);
}

#[test]
fn oscillator_triplet() {
    // H = alpha x + gamma y with alpha = m w^2 - 1/m, gamma = m w^2 + 1/m;
    // int 2 e^{-beta (alpha x + gamma y)} / sqrt(y^2 - x^2) over y > |x|
    // is 2 pi / (beta sqrt(gamma^2 - alpha^2)) = pi / (beta w)
    let (m, w, beta) = (2.0, 0.5, 1.0);
    let params = BuiltinParams {
        masses: vec![m],
        frequencies: vec![w],
        ..BuiltinParams::default()
    };
    let b = make_builtin(BuiltinName::HarmonicOscillatorTriplet, &params).unwrap();
    let solver = BranchSolver::quadratic_triplet(1, b.local_constraints[0].clone(), None).unwrap();
    let zn = estimate_partition_nambu(
        b.nambu.as_ref().unwrap(),
        &solver,
        &PartitionConfig::quadrature(beta, Domain::Bounds(vec![(0.0, 60.0), (-60.0, 60.0)])),
    )
    .unwrap();
    let exact = PI / (beta * w);
    assert!((zn.value - exact).abs() <= 1e-2 * exact, "{}", zn.value);
    let zh = estimate_partition_hamiltonian(&b.hamiltonian, &PartitionConfig::quadrature(beta, Domain::Radius(20.0)))
        .unwrap();
    assert!((zh.value - 2.0 * PI / (beta * w)).abs() <= 5e-3 * zh.value);
}

#[test]
fn degenerate_denominator_is_an_error() {
    let zn = nambu_quadrature(1.0);
    let mut zh = hamiltonian_quadrature(1.0);
    zh.stderr = zh.value;
    assert!(matches!(
        normalization_factor(zn, zh, &triplet_solver()),
        Err(StatError::DegenerateDenominator { .. })
    ));
}

#[test]
fn invalid_configs_are_rejected() {
    let b = builtin(BuiltinName::QuadraticTriplet);
    let bad_beta = PartitionConfig::quadrature(0.0, Domain::Radius(5.0));
    assert!(estimate_partition_hamiltonian(&b.hamiltonian, &bad_beta).is_err());
    let few = PartitionConfig::monte_carlo(1.0, Domain::Radius(5.0), 10, 0);
    assert!(estimate_partition_hamiltonian(&b.hamiltonian, &few).is_err());
    let quartet = builtin(BuiltinName::QuartetExB);
    assert!(matches!(
        estimate_partition_nambu(
            quartet.nambu.as_ref().unwrap(),
            &triplet_solver(),
            &PartitionConfig::quadrature(1.0, Domain::Radius(5.0))
        ),
        Err(StatError::BranchMismatch(_))
    ));
}
