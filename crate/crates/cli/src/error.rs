use hqc_core::HqcError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error(transparent)]
    Estimator(#[from] HqcError),

    #[error("baseline error in {file}: {message}")]
    Baseline { file: String, message: String },

    #[error("could not build thread pool: {0}")]
    Threads(String),

    #[error("serialization failed: {0}")]
    Serialize(String),
}
