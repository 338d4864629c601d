//! Command-line front end: configuration loading, the `converge`,
//! `simulate`, `verify` and `moments` subcommands, and report emission.

pub mod commands;
pub mod config;
pub mod plot;
pub mod presets;

use tamed_sde::SdeError;

pub use commands::{converge, moments, simulate, verify, Outcome};
pub use config::{Format, Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("divergence fraction {fraction} exceeds threshold {threshold}")]
    DivergenceThreshold { fraction: f64, threshold: f64 },
}

impl CliError {
    /// 2 for configuration problems, 3 for divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Sde(SdeError::Diverged { .. }) | CliError::DivergenceThreshold { .. } => 3,
            CliError::Sde(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}
