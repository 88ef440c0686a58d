//! Experiment runner: config parsing, the end-to-end pipeline and report
//! emission used by the `kfreg` binary.

mod config;
mod experiment;

pub use config::{train_config_digest, validate_config, DatasetSource, ExperimentConfig, SplitConfig};
pub use experiment::{
    emit_report, execute, load_dataset, metrics_markdown, render_artifacts, run_experiment,
    CandidateSummary, DatasetSummary, ExperimentReport, ExperimentRun, FailureSummary,
    MethodMetrics, Provenance, RunOptions, Timestamps, PROPOSED_METHOD,
};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;

/// Process exit code for an error: config problems are validation errors,
/// everything else is a pipeline failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_VALIDATION,
        _ => EXIT_PIPELINE,
    }
}
