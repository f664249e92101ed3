//! Benchmark harness: config-driven sweep execution, cross-dataset
//! evaluation, persistence, and report/plot emission.
//!
//! Runs are keyed by a stable hash of their configuration, persisted as
//! JSON lines, and skipped on re-execution, so sweeps resume after
//! interruption. Re-running an identical config reproduces the results
//! file byte-for-byte up to wall-time fields.

pub mod config;
pub mod crosseval;
pub mod dataset;
pub mod execute;
pub mod plot;
pub mod report;
pub mod run;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Data(#[from] survbench_core::data::DataError),
    #[error("{0}")]
    Synthetic(#[from] survbench_core::synthetic::SyntheticError),
    #[error("{0}")]
    Survival(#[from] survbench_core::survival::SurvivalError),
    #[error("{0}")]
    Neural(#[from] survbench_core::neural::NeuralError),
    #[error("{0}")]
    Metric(#[from] survbench_core::metrics::MetricError),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Other(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    /// (Partial run failures are reported by the execute summary, not an
    /// error, and exit with 3.)
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}
