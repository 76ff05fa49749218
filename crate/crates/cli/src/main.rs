use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use nambu_cli::{run_scenario, summary, CliError, Overrides, Task};

#[derive(Parser)]
#[command(name = "nambu", version, about = "Run Nambu-dynamics scenarios")]
struct Cli {
    /// Seed for sample points and Monte Carlo; overrides the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for reports and trajectories; overrides the scenario.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Residual threshold; overrides the scenario.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task named in the scenario.
    Run { scenario: PathBuf },
    /// Integrate a trajectory and write it as CSV.
    Simulate { scenario: PathBuf },
    /// Check constraint and relation residuals at random points.
    Verify { scenario: PathBuf },
    /// Estimate both partition functions and their ratio.
    Partition { scenario: PathBuf },
    /// Check and run an embedding into a larger multiplet.
    Lift { scenario: PathBuf },
    /// Print reports or trajectory tables.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let ov = Overrides {
        seed: cli.seed,
        out_dir: cli.out_dir,
        tolerance: cli.tolerance,
    };
    let (path, task) = match cli.command {
        Command::Run { scenario } => (scenario, None),
        Command::Simulate { scenario } => (scenario, Some(Task::Simulate)),
        Command::Verify { scenario } => (scenario, Some(Task::Verify)),
        Command::Partition { scenario } => (scenario, Some(Task::Partition)),
        Command::Lift { scenario } => (scenario, Some(Task::Lift)),
        Command::Report { files } => {
            for f in files {
                match summary::summarize(&f) {
                    Ok(s) => print!("{s}"),
                    Err(e) => {
                        error!("{e}");
                        return ExitCode::from(e.exit_code());
                    }
                }
            }
            return ExitCode::SUCCESS;
        }
    };
    match run_scenario(&path, task, &ov) {
        Ok(a) => {
            println!("{}", a.report.display());
            if let Some(t) = &a.trajectory {
                println!("{}", t.display());
            }
            if a.failures.is_empty() {
                return ExitCode::SUCCESS;
            }
            for f in &a.failures {
                let e = CliError::Residual {
                    what: f.what.clone(),
                    residual: f.residual,
                    threshold: f.threshold,
                };
                error!("{e}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
