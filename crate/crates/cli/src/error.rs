use std::path::PathBuf;

use crate::expr::ParseError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Json {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {source}")]
    Expression {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error("{0}")]
    Scenario(String),
    #[error("{what}: residual {residual:e} above threshold {threshold:e}")]
    Residual { what: String, residual: f64, threshold: f64 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Field(#[from] nambu_core::FieldError),
    #[error(transparent)]
    System(#[from] nambu_core::systems::SystemError),
    #[error(transparent)]
    Dynamics(#[from] nambu_core::dynamics::DynamicsError),
    #[error(transparent)]
    Stat(#[from] nambu_core::statmech::StatError),
    #[error(transparent)]
    Lift(#[from] nambu_core::embedding::LiftError),
}

impl CliError {
    /// 2 for a residual above its threshold, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Residual { .. } => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
