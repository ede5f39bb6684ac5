//! Experiment orchestration for `heatlab`: flat TOML configs, initial-data
//! recipes, single runs with their reports, and parallel parameter sweeps.

pub mod config;
pub mod recipes;
pub mod run;
pub mod sweep;

pub use config::ExperimentConfig;
pub use recipes::{make_initial_data, Recipe};
pub use run::{run_experiment, simulate, Summary};
pub use sweep::{sweep, Axis};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] heatlab::Error),
}
