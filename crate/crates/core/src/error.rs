use thiserror::Error;

/// Errors raised by the estimation and spectral routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid weight function: {0}")]
    InvalidWeight(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix became numerically singular at iteration {iteration}")]
    Singular { iteration: usize },

    #[error("only {nonzero} nonzero samples for dimension {dim}; need more than {dim}")]
    InsufficientSamples { nonzero: usize, dim: usize },

    #[error("{what} did not converge after {iterations} iterations (last change {last_change:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        last_change: f64,
    },

    #[error("Stieltjes solver failed at z = {re} + {im}i: {reason}")]
    Stieltjes { re: f64, im: f64, reason: String },

    #[error("io: {0}")]
    Io(String),

    #[error("config: {0}")]
    Config(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
