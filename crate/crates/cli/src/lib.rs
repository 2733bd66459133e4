//! Library surface of the experiment harness; the binary is a thin
//! wrapper so integration tests drive the commands in-process.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

/// Command-line failures carry the process exit code: 2 for configuration
/// errors, 3 when an experiment is infeasible, 4 for numerical failures,
/// 1 for I/O.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible experiment: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<cedent_core::Error> for CliError {
    fn from(err: cedent_core::Error) -> Self {
        use cedent_core::Error as E;
        match err {
            E::AllInfeasible => CliError::Infeasible(err.to_string()),
            E::QuadratureFailure { .. }
            | E::StructureViolation(_)
            | E::DegenerateDerivative(_)
            | E::InsufficientPoints { .. } => CliError::Numerical(err.to_string()),
            E::InvalidParameter(_) | E::InfeasibleCalibration(_) | E::MomentDivergence { .. } => {
                CliError::Config(err.to_string())
            }
        }
    }
}

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CEDENT_OUT";
