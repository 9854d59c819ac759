use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures reported by a [`RuntimeSource`](crate::runners::RuntimeSource).
#[derive(Debug, Error)]
pub enum SourceError {
    #[error("unknown configuration {0}")]
    UnknownConfig(usize),
    #[error("unknown instance {0}")]
    UnknownInstance(usize),
    #[error("invalid captime {cap} (previous cap {prev_cap})")]
    InvalidCap { cap: f64, prev_cap: f64 },
    #[error("failed to spawn `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error("process supervision failed: {0}")]
    Supervise(#[source] io::Error),
    #[error("configuration generator failed: {0}")]
    Generator(String),
    #[error("operation not supported by this backend: {0}")]
    Unsupported(&'static str),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empirical CDF has no values")]
    EmptyCdf,

    #[error("matrix{}: {message}", location(*.line, *.column))]
    Matrix {
        line: Option<u64>,
        column: Option<usize>,
        message: String,
    },

    #[error("run of configuration {config} on instance {instance} with cap {cap}s failed: {source}")]
    Step {
        config: usize,
        instance: u64,
        cap: f64,
        #[source]
        source: SourceError,
    },

    #[error(transparent)]
    Source(#[from] SourceError),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error("event log line {line}: {message}")]
    EventLog { line: usize, message: String },

    #[error("quantile level {0} is not active")]
    InactiveLevel(u32),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// I/O failure on `path`, naming the file.
    pub(crate) fn at_path(path: &std::path::Path, e: io::Error) -> Self {
        let what = match e.kind() {
            io::ErrorKind::NotFound => "file not found".to_owned(),
            _ => e.to_string(),
        };
        Self::Io(io::Error::new(e.kind(), format!("{}: {what}", path.display())))
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

fn location(line: Option<u64>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" line {l}, column {c}"),
        (Some(l), None) => format!(" line {l}"),
        (None, Some(c)) => format!(" column {c}"),
        (None, None) => String::new(),
    }
}
