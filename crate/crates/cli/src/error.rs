use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Solver(#[from] rstokes::Error),

    #[error("invariant check failed: {0}")]
    Invariant(String),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 success, 1 usage, 2 solver or I/O failure, 3 invariant failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Solver(e) if is_input_error(e) => 1,
            CliError::Solver(_) | CliError::Io { .. } => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

fn is_input_error(e: &rstokes::Error) -> bool {
    use rstokes::Error as E;
    match e {
        E::InvalidInput(_) | E::InvalidMesh(_) | E::Parse { .. } | E::NonPositiveArea { .. } | E::Io { .. } => true,
        E::Context { source, .. } => is_input_error(source),
        _ => false,
    }
}
