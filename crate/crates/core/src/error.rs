use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by mesh construction, assembly and the nonlinear solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("triangle {triangle} has non-positive area {area:e}")]
    NonPositiveArea { triangle: usize, area: f64 },

    #[error("mesh parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is singular (pivot {pivot}){}", hint.as_deref().map(|h| format!("; {h}")).unwrap_or_default())]
    SingularMatrix { pivot: usize, hint: Option<String> },

    #[error("semismooth Newton did not converge in {iterations} iterations (residual {residual:e})")]
    MaxIters { iterations: usize, residual: f64 },

    #[error("active set cycling detected at iteration {iteration}")]
    Cycling { iteration: usize },

    #[error("compatibility condition violated: pairing {pairing:e} is not negative")]
    Incompatible { pairing: f64 },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a short description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
