//! Config-driven experiment runner for `hqc-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod regress;
pub mod render;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use run::{run, Report, Results};
