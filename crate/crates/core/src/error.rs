use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix {0} is not symmetric")]
    NotSymmetric(String),

    #[error("matrix {0} is not positive definite")]
    NotPositiveDefinite(String),

    #[error("weighted norm of an indefinite form: x^T M x = {value:e}")]
    Indefinite { value: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A, B, C symmetric positive definite and D of full row rank.
    #[error("matrix {matrix} violates the structural assumptions (SPD A, B, C; full-row-rank D): {reason}")]
    StructuralAssumption {
        matrix: &'static str,
        reason: String,
    },

    #[error("initial state is not consistent: residual {residual:e} exceeds {tolerance:e}")]
    Inconsistent { residual: f64, tolerance: f64 },

    #[error("no stability transition for K = {k} in [{lo}, {hi}]")]
    NoTransition { k: usize, lo: f64, hi: f64 },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
