//! Library surface of the batch driver, exposed so integration tests can run
//! the exact pipelines the binary dispatches.

use thiserror::Error;

pub mod config;
pub mod format;
pub mod manifest;
pub mod runner;

pub use config::RunConfig;
pub use manifest::Manifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cghydro_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 for configuration problems, 2 for numeric or runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}
