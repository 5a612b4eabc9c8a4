//! Experiment harness: flat key-value configuration, canned presets,
//! experiment assembly, and artifact persistence around `fcl-core`.
//!
//! The `fclsim` binary is a thin CLI over this library; tests drive the
//! same code paths programmatically.

pub mod assemble;
pub mod config;
pub mod presets;
pub mod runio;
pub mod runner;

use thiserror::Error;

/// Harness-level error, split by exit code: configuration problems exit
/// with 2, runtime problems (I/O, numerical failures mid-run) with 3.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Runtime(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Everything up to and including validation counts as configuration.
pub(crate) fn config_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

pub(crate) fn runtime_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Runtime(e.to_string())
}
