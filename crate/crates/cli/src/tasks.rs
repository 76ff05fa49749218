//! The four scenario tasks. Each returns a report, an optional trajectory
//! table and the residual checks that failed.

use std::collections::BTreeMap;

use log::{info, warn};
use rand_chacha::rand_core::RngCore;
use serde::Serialize;

use nambu_core::dynamics::{integrate, IntegratorConfig, Trajectory, VectorField};
use nambu_core::embedding::{
    lift_nambu_system, verify_lift_conditions, verify_lift_constancy, LiftSpec, LIFT_THRESHOLD,
};
use nambu_core::fields::{Layout, Point, ScalarField};
use nambu_core::statmech::{
    chunk_rng, estimate_partition_hamiltonian_with, estimate_partition_nambu_with, normalization_factor,
    BranchSolver, Domain, Estimate, PartitionConfig,
};
use nambu_core::systems::{
    verify_constraint_constancy, verify_generalized_conditions, verify_induced_constraints, BuiltinName, Monitor,
    SamplePoints,
};

use crate::error::CliError;
use crate::expr::Expr;
use crate::output::Table;
use crate::parallel::Rayon;
use crate::scenario::{EstimatorCfg, Flow, LiftCfg, LoadedSystem, PartitionCfg, SimulateCfg, VerifyCfg};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub what: String,
    pub residual: f64,
    pub threshold: f64,
}

impl Failure {
    fn check(failures: &mut Vec<Failure>, what: &str, residual: f64, threshold: f64) {
        if !(residual <= threshold) {
            failures.push(Failure {
                what: what.to_string(),
                residual,
                threshold,
            });
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: serde_json::Value,
    pub table: Option<Table>,
    pub failures: Vec<Failure>,
}

fn to_value(report: impl Serialize) -> serde_json::Value {
    serde_json::to_value(report).expect("reports serialize")
}

/// Canonical sample points, uniform in `[-range, range]` per axis.
pub fn sample_points(seed: u64, count: usize, dim: usize, range: f64) -> Vec<Vec<f64>> {
    let mut rng = chunk_rng(seed, 0);
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                    range * (2.0 * u - 1.0)
                })
                .collect()
        })
        .collect()
}

struct Run {
    traj: Trajectory,
    names: Vec<String>,
}

fn run_flow(sys: &LoadedSystem, cfg: &SimulateCfg) -> Result<Run, CliError> {
    let n = sys.hamiltonian.subsystems();
    if cfg.start.len() != 2 * n {
        return Err(CliError::Scenario(format!(
            "simulate.start: expected {} canonical values, got {}",
            2 * n,
            cfg.start.len()
        )));
    }
    let icfg = IntegratorConfig::rk4(cfg.dt, cfg.steps).with_variational(cfg.variational);
    let need_map = || {
        sys.map
            .as_ref()
            .ok_or_else(|| CliError::Scenario(format!("{} has no multiplet map", sys.label)))
    };
    let energy = |field: &ScalarField| Monitor {
        name: "H".into(),
        field: field.clone(),
    };
    let (rhs, start, names, monitors): (&dyn VectorField, Point, Vec<String>, Vec<Monitor>) = match cfg.flow {
        Flow::Hamiltonian => (
            &sys.hamiltonian,
            Point::new(cfg.start.clone(), Layout::canonical(n))?,
            sys.canonical_names.clone(),
            vec![energy(sys.hamiltonian.hamiltonian())],
        ),
        Flow::Nambu => {
            let nsys = sys
                .nambu
                .as_ref()
                .ok_or_else(|| CliError::Scenario(format!("{} has no Nambu form", sys.label)))?;
            let map = need_map()?;
            let mut m = nsys.monitors().to_vec();
            m.push(energy(nsys.hamiltonian()));
            (nsys, Point::single(map.forward(&cfg.start)), sys.multiplet_names.clone(), m)
        }
        Flow::Generalized => {
            let gsys = sys
                .generalized
                .as_ref()
                .ok_or_else(|| CliError::Scenario(format!("{} has no generalized Nambu form", sys.label)))?;
            let map = need_map()?;
            let mut m = gsys.monitors();
            m.push(energy(gsys.hamiltonian()));
            (gsys, Point::single(map.forward(&cfg.start)), sys.multiplet_names.clone(), m)
        }
    };
    info!("integrating {} steps of {} ({:?} flow)", cfg.steps, cfg.dt, cfg.flow);
    let traj = integrate(rhs, &start, &icfg, &monitors)?;
    if let Some(t) = &traj.truncated {
        warn!("run stopped at t = {} after step {}: {}", t.time, t.last_good, t.reason);
    }
    Ok(Run { traj, names })
}

fn drifts(traj: &Trajectory) -> BTreeMap<String, f64> {
    traj.diagnostics
        .iter()
        .filter_map(|(n, _)| Some((n.clone(), traj.max_drift(n)?)))
        .collect()
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    task: &'static str,
    system: &'a str,
    flow: Flow,
    dt: f64,
    steps: usize,
    seed: u64,
    final_time: f64,
    final_state: Vec<f64>,
    max_drift: BTreeMap<String, f64>,
    final_volume: Option<f64>,
    truncated: Option<String>,
    threshold: Option<f64>,
    failures: &'a [Failure],
}

pub fn simulate(sys: &LoadedSystem, cfg: &SimulateCfg, seed: u64, tolerance: Option<f64>) -> Result<Outcome, CliError> {
    let run = run_flow(sys, cfg)?;
    let traj = &run.traj;
    let max_drift = drifts(traj);
    let mut failures = Vec::new();
    if let Some(tol) = tolerance {
        for (name, d) in &max_drift {
            Failure::check(&mut failures, &format!("drift of {name}"), *d, tol);
        }
    }
    let report = SimulateReport {
        task: "simulate",
        system: &sys.label,
        flow: cfg.flow,
        dt: cfg.dt,
        steps: cfg.steps,
        seed,
        final_time: *traj.times.last().unwrap_or(&0.0),
        final_state: traj.last_state().to_vec(),
        max_drift,
        final_volume: traj.volume.as_ref().and_then(|v| v.last().copied()),
        truncated: traj.truncated.as_ref().map(|t| t.reason.clone()),
        threshold: tolerance,
        failures: &failures,
    };
    Ok(Outcome {
        report: to_value(report),
        table: Some(Table::from_trajectory(traj, &run.names, cfg.every)),
        failures,
    })
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    task: &'static str,
    system: &'a str,
    seed: u64,
    samples: usize,
    range: f64,
    threshold: f64,
    residuals: BTreeMap<String, f64>,
    failures: &'a [Failure],
}

/// Canonical coordinates and the products `q_k p_k`.
fn canonical_probes(dim: usize) -> Vec<ScalarField> {
    let mut out: Vec<ScalarField> = (0..dim).map(|i| ScalarField::coordinate(dim, i)).collect();
    for k in 0..dim / 2 {
        out.push(ScalarField::coordinate(dim, 2 * k).mul(&ScalarField::coordinate(dim, 2 * k + 1)));
    }
    out
}

pub fn verify(sys: &LoadedSystem, cfg: &VerifyCfg, seed: u64, tolerance: Option<f64>) -> Result<Outcome, CliError> {
    let map = sys
        .map
        .as_ref()
        .ok_or_else(|| CliError::Scenario(format!("{} has no multiplet map to verify", sys.label)))?;
    let threshold = tolerance.unwrap_or(DEFAULT_TOLERANCE);
    let dim = map.canonical_dim();
    let points = sample_points(seed, cfg.samples, dim, cfg.range);
    let mut residuals = BTreeMap::new();

    let arity = map.multiplet_layout().uniform_arity();
    if sys.nambu.is_some() && arity == Some(sys.local_constraints.len() + 2) {
        let r = verify_induced_constraints(map, &sys.local_constraints, &SamplePoints::Canonical(points.clone()))?;
        residuals.insert("induced-constraints".to_string(), r);
    }

    let probes = canonical_probes(dim);
    let mdim = map.multiplet_dim();
    let mut constancy: f64 = 0.0;
    for g in &sys.local_constraints {
        let pieces: Vec<ScalarField> = if g.dim() == mdim {
            vec![g.clone()]
        } else {
            let layout = map.multiplet_layout();
            (0..layout.subsystems())
                .map(|k| g.embed(mdim, &layout.range(k).collect::<Vec<_>>()))
                .collect()
        };
        for piece in &pieces {
            constancy = constancy.max(verify_constraint_constancy(piece, &probes, map, &points)?);
        }
    }
    if !sys.local_constraints.is_empty() {
        residuals.insert("constraint-constancy".to_string(), constancy);
    }

    if let Some(g) = &sys.generalized {
        let r = verify_generalized_conditions(g, map, &points)?;
        residuals.insert("generalized-xx".to_string(), r.xx);
        residuals.insert("generalized-xz".to_string(), r.xz);
        residuals.insert("generalized-zz".to_string(), r.zz);
        residuals.insert("generalized-cross".to_string(), r.cross);
    }
    if residuals.is_empty() {
        return Err(CliError::Scenario(format!("{} has nothing to verify", sys.label)));
    }
    let mut failures = Vec::new();
    for (what, r) in &residuals {
        Failure::check(&mut failures, what, *r, threshold);
    }
    let report = VerifyReport {
        task: "verify",
        system: &sys.label,
        seed,
        samples: cfg.samples,
        range: cfg.range,
        threshold,
        residuals,
        failures: &failures,
    };
    Ok(Outcome {
        report: to_value(report),
        table: None,
        failures,
    })
}

#[derive(Serialize)]
struct EstimateReport {
    value: f64,
    stderr: f64,
    method: &'static str,
    beta: f64,
    seed: u64,
    samples: usize,
    excluded_mass_bound: Option<f64>,
    epsilon: Option<f64>,
    branch_count: usize,
}

impl From<&Estimate> for EstimateReport {
    fn from(e: &Estimate) -> Self {
        Self {
            value: e.value,
            stderr: e.stderr,
            method: e.method.as_str(),
            beta: e.beta,
            seed: e.seed,
            samples: e.samples,
            excluded_mass_bound: e.excluded_mass_bound,
            epsilon: e.epsilon,
            branch_count: e.branch_count,
        }
    }
}

#[derive(Serialize)]
struct PartitionReport<'a> {
    task: &'static str,
    system: &'a str,
    #[serde(flatten)]
    nambu: EstimateReport,
    hamiltonian: EstimateReport,
    ratio: f64,
    ratio_stderr: f64,
    predicted_ratio: usize,
}

/// `(alpha_k, gamma_k)` with `H = sum_k alpha_k x_k + gamma_k y_k` and the
/// canonical curvature `c_k` with `H >= c_k (q_k^2 + p_k^2) / 2`.
fn triplet_coefficients(sys: &LoadedSystem, name: BuiltinName) -> Vec<(f64, f64, f64)> {
    let n = sys.hamiltonian.subsystems();
    let pick = |v: &[f64], k: usize| if v.len() == 1 { v[0] } else { v[k] };
    (0..n)
        .map(|k| match name {
            BuiltinName::HarmonicOscillatorTriplet => {
                let m = pick(&sys.params.masses, k);
                let w = pick(&sys.params.frequencies, k);
                (m * w * w - 1.0 / m, m * w * w + 1.0 / m, (1.0 / m).min(m * w * w))
            }
            _ => (0.0, 2.0, 1.0),
        })
        .collect()
}

pub fn partition(sys: &LoadedSystem, cfg: &PartitionCfg, seed: u64) -> Result<Outcome, CliError> {
    let name = match sys.builtin {
        Some(b @ (BuiltinName::QuadraticTriplet | BuiltinName::HarmonicOscillatorTriplet)) => b,
        _ => {
            return Err(CliError::Scenario(
                "partition needs the quadratic-triplet or harmonic-oscillator-triplet built-in".into(),
            ))
        }
    };
    let nsys = sys.nambu.as_ref().expect("triplet built-ins have a Nambu form");
    let n = sys.hamiltonian.subsystems();
    let coeffs = triplet_coefficients(sys, name);
    // H >= rate * y on y > |x|
    let rate = coeffs.iter().map(|(a, g, _)| g - a.abs()).fold(f64::INFINITY, f64::min);
    let curvature = coeffs.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let solver = BranchSolver::quadratic_triplet(n, sys.local_constraints[0].clone(), Some(rate))?;

    // e^{-40} relative cut-off on both domains
    let ymax = 40.0 / (cfg.beta * rate);
    let radius = (80.0 / (cfg.beta * curvature)).sqrt();
    let bounds: Vec<(f64, f64)> = (0..n).flat_map(|_| [(0.0, ymax), (-ymax, ymax)]).collect();
    let build = |domain: Domain| {
        let mut p = match cfg.estimator {
            EstimatorCfg::TensorQuadrature => PartitionConfig::quadrature(cfg.beta, domain),
            EstimatorCfg::MonteCarlo => PartitionConfig::monte_carlo(
                cfg.beta,
                domain,
                if cfg.samples == 0 { 1_000_000 } else { cfg.samples },
                seed,
            ),
        };
        if let Some(l) = cfg.level {
            p.level = l;
        }
        p.epsilon = cfg.epsilon;
        p
    };
    info!("estimating Z_N and Z_H at beta = {}", cfg.beta);
    let zn = estimate_partition_nambu_with(nsys, &solver, &build(Domain::Bounds(bounds)), &Rayon)?;
    let zh = estimate_partition_hamiltonian_with(&sys.hamiltonian, &build(Domain::Radius(radius)), &Rayon)?;
    let norm = normalization_factor(zn, zh, &solver)?;
    let mut nambu: EstimateReport = (&norm.nambu).into();
    let mut hamiltonian: EstimateReport = (&norm.hamiltonian).into();
    nambu.seed = seed;
    hamiltonian.seed = seed;
    let report = PartitionReport {
        task: "partition",
        system: &sys.label,
        nambu,
        hamiltonian,
        ratio: norm.ratio,
        ratio_stderr: norm.stderr,
        predicted_ratio: norm.predicted,
    };
    Ok(Outcome {
        report: to_value(report),
        table: None,
        failures: Vec::new(),
    })
}

#[derive(Serialize)]
struct LiftReport<'a> {
    task: &'static str,
    system: &'a str,
    seed: u64,
    samples: usize,
    r: usize,
    coordinates: Vec<String>,
    threshold: f64,
    lift_residual: f64,
    probe_residual: f64,
    min_nonvanishing_brackets: usize,
    projection_distance: Option<f64>,
    max_drift: BTreeMap<String, f64>,
    failures: &'a [Failure],
}

pub fn lift(sys: &LoadedSystem, cfg: &LiftCfg, seed: u64, tolerance: Option<f64>) -> Result<Outcome, CliError> {
    let nsys = sys
        .nambu
        .as_ref()
        .ok_or_else(|| CliError::Scenario(format!("{} has no Nambu form to lift", sys.label)))?;
    let map = sys.map.as_ref().expect("Nambu systems come with a map");
    let threshold = tolerance.unwrap_or(DEFAULT_TOLERANCE);
    let extras = cfg
        .extras
        .iter()
        .enumerate()
        .map(|(i, e)| {
            Expr::parse(e, &sys.multiplet_names)
                .map(Expr::into_field)
                .map_err(|source| CliError::Expression {
                    field: format!("lift.extras[{i}]"),
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let r = extras.len();
    let spec = LiftSpec::graph(nsys.clone(), extras)?;
    let mut coordinates = sys.multiplet_names.clone();
    match &cfg.names {
        Some(names) if names.len() == r => coordinates.extend(names.iter().cloned()),
        Some(names) => {
            return Err(CliError::Scenario(format!("lift.names: {} names for {r} extras", names.len())));
        }
        None => coordinates.extend((1..=r).map(|i| format!("w{i}"))),
    }

    let points: Vec<Vec<f64>> = sample_points(seed, cfg.samples, map.canonical_dim(), cfg.range)
        .iter()
        .map(|qp| map.forward(qp))
        .collect();
    let m = spec.lifted_dim();
    let probes: Vec<ScalarField> = (0..nsys.arity() - 1)
        .map(|k| {
            ScalarField::coordinate(m, k % m)
                .mul(&ScalarField::coordinate(m, (k + 1) % m))
                .add(&ScalarField::coordinate(m, (k + 2) % m))
        })
        .collect();
    let lift_residual = verify_lift_conditions(&spec, &points)?;
    let probe_residual = verify_lift_constancy(&spec, &probes, &points)?;
    let min_nonvanishing_brackets = points
        .iter()
        .map(|x| spec.nonvanishing_brackets(x, LIFT_THRESHOLD))
        .try_fold(usize::MAX, |acc, c| c.map(|c| acc.min(c)))?;

    let mut failures = Vec::new();
    Failure::check(&mut failures, "lift relation", lift_residual, threshold);
    Failure::check(&mut failures, "probe brackets", probe_residual, threshold);

    let mut projection_distance = None;
    let mut max_drift = BTreeMap::new();
    let mut table = None;
    if let Some(sim) = &cfg.simulate {
        if failures.is_empty() {
            let lifted = lift_nambu_system(&spec, &points)?;
            let icfg = IntegratorConfig::rk4(sim.dt, sim.steps).with_variational(sim.variational);
            let x0 = map.forward(&sim.start);
            let small = integrate(nsys, &Point::single(x0.clone()), &icfg, &[])?;
            let big = integrate(&lifted, &Point::single(spec.lift_point(&x0)), &icfg, lifted.monitors())?;
            let d = big.map_states(|y| spec.project_point(y)).sup_distance(&small)?;
            Failure::check(&mut failures, "projection", d, threshold);
            projection_distance = Some(d);
            max_drift = drifts(&big);
            table = Some(Table::from_trajectory(&big, &coordinates, sim.every));
        } else {
            warn!("lift conditions fail, skipping the lifted run");
        }
    }
    let report = LiftReport {
        task: "lift",
        system: &sys.label,
        seed,
        samples: cfg.samples,
        r,
        coordinates,
        threshold,
        lift_residual,
        probe_residual,
        min_nonvanishing_brackets,
        projection_distance,
        max_drift,
        failures: &failures,
    };
    Ok(Outcome {
        report: to_value(report),
        table,
        failures,
    })
}
