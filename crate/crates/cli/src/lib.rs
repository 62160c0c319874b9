//! Library side of the `respose` command-line tool: scene files and the
//! commands, kept here so tests can drive them without spawning processes.

pub mod commands;
pub mod io;

use thiserror::Error;

/// Version stamped into every file and report the tool writes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("bound verification failed")]
    BoundsMismatch,
}

impl CliError {
    /// 2 for unsupported configurations, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Unsupported(_) => 2,
            _ => 1,
        }
    }
}
