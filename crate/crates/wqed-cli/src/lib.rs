//! Configuration, command dispatch, caching and the invariant suite for
//! the giant-atom scattering engine.

pub mod cache;
pub mod commands;
pub mod config;
pub mod output;
pub mod validate;

use serde_json::json;
use thiserror::Error;
use wqed::{ModelError, ObservableError, ScatteringError, VertexError};

pub use commands::{run, Outcome};
pub use config::{Observable, Override, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Observable(#[from] ObservableError),

    #[error(transparent)]
    Scattering(#[from] ScatteringError),

    #[error(transparent)]
    Vertex(#[from] VertexError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{failed} of {total} invariant checks failed: {}", .names.join(", "))]
    ChecksFailed {
        failed: usize,
        total: usize,
        names: Vec<String>,
    },
}

impl CliError {
    /// 2 for configuration problems, 4 for a failing invariant suite, 3 for
    /// everything raised while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation(_) => 2,
            CliError::ChecksFailed { .. } => 4,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse_error",
            CliError::Validation(_) => "validation_error",
            CliError::Observable(_) | CliError::Scattering(_) | CliError::Vertex(_) | CliError::Model(_) => {
                "solver_error"
            }
            CliError::Io { .. } => "io_error",
            CliError::ChecksFailed { .. } => "validation_failure",
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        match self {
            CliError::Validation(list) => v["violations"] = json!(list),
            CliError::ChecksFailed { names, .. } => v["failed_checks"] = json!(names),
            CliError::Parse { context, .. } => v["context"] = json!(context),
            _ => {}
        }
        v
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
