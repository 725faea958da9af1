use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}, field `{field}`: {msg}")]
    Parse {
        line: usize,
        field: String,
        msg: String,
    },

    #[error(
        "calibration error: {msg} (iterations={iterations}, kept={kept}, distinct_x={distinct_x})"
    )]
    Calibration {
        msg: String,
        iterations: usize,
        kept: usize,
        distinct_x: usize,
    },

    #[error("output identity violated for prompt {prompt}: arms diverge at token {position}")]
    IdentityViolation { prompt: usize, position: usize },

    #[error("missing records: {0}")]
    MissingRecords(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// Short stable identifier for the error kind, used in machine-readable CLI output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::Parse { .. } => "parse",
            Error::Calibration { .. } => "calibration",
            Error::IdentityViolation { .. } => "identity",
            Error::MissingRecords(_) => "missing-records",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
