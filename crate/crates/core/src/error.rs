use thiserror::Error;

/// Errors raised by the numerical toolkit.
///
/// Estimator verdicts (not BMO, not QC-consistent, divergent Pansu quotient)
/// are never errors; they live in the report types.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HqcError {
    #[error("dimension mismatch: expected H^{expected}, got H^{found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("group dimension must be at least 1")]
    ZeroDimension,

    #[error("non-finite coordinate in {context}")]
    NonFinite { context: String },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("homomorphism failed validation (worst residual {residual:e} > tol {tol:e})")]
    InvalidHomomorphism { residual: f64, tol: f64 },

    #[error("map `{map}` has no inverse evaluator")]
    MissingInverse { map: String },

    #[error("scalar field is not finite at {location}")]
    NonFiniteField { location: String },

    #[error("could not draw points from {what} after {attempts} attempts")]
    EmptySample { what: String, attempts: usize },

    #[error("degenerate image: {0}")]
    DegenerateImage(String),
}

pub type Result<T, E = HqcError> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> HqcError {
    HqcError::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
