//! Simulation studies on the Rosenbrock function: recovering the length-scale
//! weights that generated a BO trajectory, and comparing strategy transfer
//! against self-adaptive BO. Results are written as CSV tables plus a JSON
//! metadata file.

pub mod benchmarks;
mod config;
pub mod recovery;
pub mod stats;
pub mod transfer;

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

pub use benchmarks::Benchmark;
pub use config::StudyConfig;
pub use recovery::{recovery_study, RecoveryReport};
pub use stats::bootstrap_ci;
pub use transfer::{transfer_study, TransferReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid study config: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Trajectory(#[from] strategist_core::TrajectoryError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

#[derive(Serialize)]
pub(crate) struct Meta<'a, S: Serialize> {
    pub study: &'static str,
    pub config: &'a StudyConfig,
    pub versions: Versions,
    pub summary: S,
}

#[derive(Serialize)]
pub(crate) struct Versions {
    pub harness: &'static str,
    pub core: &'static str,
}

impl Versions {
    pub fn current() -> Self {
        Self { harness: env!("CARGO_PKG_VERSION"), core: strategist_core::VERSION }
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(io_err(path))
}
