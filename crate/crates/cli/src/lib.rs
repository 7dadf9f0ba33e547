//! Experiment runner for the `subnet-hpo` command: config parsing, journaled
//! runs with exact resume, and paired speedup reports.

pub mod commands;
pub mod config;
pub mod journal;

pub use commands::{
    cmd_compare, cmd_report, cmd_run, run_one, seed_offset, RunSummary, SEED_OFFSET_VAR,
};
pub use config::{parse_experiment_config, plan_from_value, ExperimentPlan};

use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid `{key}`: {message}")]
    Validation { key: String, message: String },
    #[error("{path}: plan digest {found} does not match the current config ({expected}); refusing to resume")]
    ResumeMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("unpaired runs: {0}")]
    UnpairedRuns(String),
    #[error("{path}: corrupt journal: {message}")]
    Journal { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sched(#[from] subnet_hpo::sched::SchedError),
    #[error(transparent)]
    Metrics(#[from] subnet_hpo::metrics::MetricsError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Journal { .. } => 2,
            _ => 1,
        }
    }
}
