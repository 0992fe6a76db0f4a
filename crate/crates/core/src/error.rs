use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("block structure mismatch: {0}")]
    BlockMismatch(String),

    #[error("non-negligible imaginary residue {residue:e} in {what}")]
    ImaginaryResidue { what: &'static str, residue: f64 },

    #[error("integrator failed to converge: step halving changed the result by {change:e} (tolerance {tolerance:e})")]
    Tolerance { change: f64, tolerance: f64 },

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidInput {
        field,
        reason: reason.into(),
    }
}
