//! Command-line runner for the two-stage solver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod output;
pub mod plot;
pub mod run;
pub mod user;

use thiserror::Error;

pub use args::{Cli, Command, ProblemKind, RunArgs};
pub use run::{execute, RunReport};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or inputs; exit code 2.
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<cmgd::Error> for CliError {
    fn from(e: cmgd::Error) -> Self {
        match e {
            cmgd::Error::Io { .. }
            | cmgd::Error::EmptyDataset { .. }
            | cmgd::Error::Sampling { .. } => CliError::Config(e.to_string()),
            cmgd::Error::Construction(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
