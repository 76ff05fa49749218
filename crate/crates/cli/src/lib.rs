//! Scenario-driven front end: load a system from JSON, run one task, write
//! a JSON report and, for runs, a trajectory CSV.

pub mod error;
pub mod expr;
pub mod output;
pub mod parallel;
pub mod scenario;
pub mod summary;
pub mod tasks;

use std::fs;
use std::path::{Path, PathBuf};

use log::info;

pub use error::CliError;
pub use scenario::{Scenario, Task};
pub use tasks::{Failure, Outcome};

/// Command-line overrides of the scenario.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub tolerance: Option<f64>,
}

/// Where a run wrote its files.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub report: PathBuf,
    pub trajectory: Option<PathBuf>,
    pub failures: Vec<Failure>,
}

fn missing(task: Task) -> CliError {
    CliError::Scenario(format!("task {} needs a `{}` block", task.as_str(), task.as_str()))
}

/// Runs `task`, or the scenario's own task when `None`.
pub fn execute(scenario: &Scenario, task: Option<Task>, ov: &Overrides) -> Result<(Task, Outcome), CliError> {
    let task = task
        .or(scenario.task)
        .ok_or_else(|| CliError::Scenario("no task given in the scenario or on the command line".into()))?;
    let seed = ov.seed.or(scenario.seed).unwrap_or(0);
    let tolerance = ov.tolerance.or(scenario.tolerance);
    let sys = scenario.system.load()?;
    info!("{}: {} ({} canonical pairs)", task.as_str(), sys.label, sys.hamiltonian.subsystems());
    let outcome = match task {
        Task::Simulate => tasks::simulate(&sys, scenario.simulate.as_ref().ok_or(missing(task))?, seed, tolerance)?,
        Task::Verify => tasks::verify(&sys, &scenario.verify.clone().unwrap_or_default(), seed, tolerance)?,
        Task::Partition => tasks::partition(&sys, scenario.partition.as_ref().ok_or(missing(task))?, seed)?,
        Task::Lift => tasks::lift(&sys, scenario.lift.as_ref().ok_or(missing(task))?, seed, tolerance)?,
    };
    Ok((task, outcome))
}

pub fn write_outcome(scenario: &Scenario, task: Task, outcome: &Outcome, ov: &Overrides) -> Result<Artifacts, CliError> {
    let dir = ov
        .out_dir
        .clone()
        .or_else(|| scenario.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let report = dir.join(scenario.output.report.clone().unwrap_or_else(|| format!("{}.json", task.as_str())));
    output::write_json(&report, &outcome.report)?;
    let trajectory = match &outcome.table {
        Some(t) => {
            let path = dir.join(scenario.output.trajectory.clone().unwrap_or_else(|| format!("{}.csv", task.as_str())));
            t.write_csv(&path)?;
            Some(path)
        }
        None => None,
    };
    Ok(Artifacts {
        report,
        trajectory,
        failures: outcome.failures.clone(),
    })
}

/// Load, run and write. Residual failures come back in the artifacts; the
/// caller turns them into exit status 2.
pub fn run_scenario(path: &Path, task: Option<Task>, ov: &Overrides) -> Result<Artifacts, CliError> {
    let scenario = Scenario::load(path)?;
    let (task, outcome) = execute(&scenario, task, ov)?;
    write_outcome(&scenario, task, &outcome, ov)
}
