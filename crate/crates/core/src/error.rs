use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solver library.
///
/// Numerical outcomes such as an infeasible linear program or a stalled
/// trajectory are reported through status values, not through this type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid problem: {0}")]
    Construction(String),

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: no valid records ({skipped} lines rejected)")]
    EmptyDataset { path: PathBuf, skipped: usize },

    #[error(
        "no feasible start after {attempts} draws; largest violation {violation:.3e} in {constraint}"
    )]
    Sampling {
        attempts: usize,
        constraint: String,
        violation: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
