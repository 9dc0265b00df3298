//! Experiment orchestration: configs, training runs, comparisons and the
//! projection audit and timing tools.

mod compare;
mod config;
mod tools;
mod train;

pub use compare::{compare, ComparisonRow, CurvePoint, COMPARISON_FILE, CURVES_FILE};
pub use config::{RunConfig, RunSection, Variant, OUTPUT_DIR_ENV};
pub use tools::{bench, jl_check, BenchConfig, JlCheckConfig, JlCheckReport, JlSweepEntry};
pub use train::{
    evaluate_run, read_metrics, train, train_seed, EvaluationReport, MetricsRow, RunStatus, RunSummary, SeedEvaluation,
    SeedSummary, CHECKPOINT_FILE, CONFIG_FILE, EVALUATION_FILE, METRICS_COLUMNS, METRICS_FILE, SUMMARY_FILE,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agent::AgentError;
use crate::envs::EnvError;
use crate::random_projection::ProjectionError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("runs are not comparable: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

impl HarnessError {
    /// Process exit code: 1 for configuration problems, 2 for everything
    /// that goes wrong at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } | HarnessError::Mismatch(_) => 1,
            _ => 2,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn format(path: &Path, err: impl std::fmt::Display) -> Self {
        HarnessError::Format {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }
}

/// Parses TOML, reporting the dotted key path of any schema error.
fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, HarnessError> {
    let de = toml::Deserializer::parse(text).map_err(|e| HarnessError::Config {
        path: String::new(),
        message: e.to_string(),
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::format(path, e))?;
    write_file(path, text.as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::format(path, e))
}
