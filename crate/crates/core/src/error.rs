use std::path::PathBuf;

/// Errors raised anywhere in the diagnosis toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {term}")]
    NonFinite { term: String },

    #[error("trim did not converge after {iterations} iterations (scaled residual {residual:.3e})")]
    TrimFailed { iterations: usize, residual: f64 },

    #[error("non-finite Jacobian entry at ({row}, {col})")]
    NonFiniteJacobian { row: usize, col: usize },

    #[error("Riccati iteration did not converge after {iterations} iterations (last step {last_step:.3e})")]
    RiccatiDiverged { iterations: usize, last_step: f64 },

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("bias is not identifiable: signature mass c_s = {c_s:.3e}")]
    Unidentifiable { c_s: f64 },

    #[error("operating point {id}: {source}")]
    OperatingPoint {
        id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("model bank checksum mismatch (stored {stored}, computed {computed})")]
    Checksum { stored: String, computed: String },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn non_finite(term: impl Into<String>) -> Self {
        Error::NonFinite { term: term.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse { path: path.into(), message: message.to_string() }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input files).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite { .. }
            | Error::TrimFailed { .. }
            | Error::NonFiniteJacobian { .. }
            | Error::RiccatiDiverged { .. }
            | Error::SingularCovariance
            | Error::Unidentifiable { .. } => true,
            Error::OperatingPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
