//! Experiment orchestration: TOML run configs, pipelines, CSV and summary
//! output, and the statistics used to summarize attack distances.

pub mod config;
pub mod output;
mod pipelines;
pub mod stats;

use thiserror::Error;

use crate::arch::ArchError;
use crate::certificate::CertError;
use crate::covering::CoverError;
use crate::gp::GpError;
use crate::kernel::KernelError;
use crate::randnet::RandnetError;
use stats::StatsError;

pub use config::{KernelChoice, Overrides, Pipeline, RunConfig};
pub use output::{ResultRow, RunOutcome};
pub use pipelines::run_config;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("output: {0}")]
    Io(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Randnet(#[from] RandnetError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl HarnessError {
    /// Process exit status: 2 for config errors, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}
