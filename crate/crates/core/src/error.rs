// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("duplicate sample id {0}")]
    DuplicateId(u32),

    #[error("class {class} has {available} samples, {required} required")]
    InsufficientClass {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("admission error: {0}")]
    Admission(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("model state error: {0}")]
    State(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("no prototype for class {0}")]
    MissingPrototype(usize),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("threshold learning error: {0}")]
    Threshold(String),

    #[error("report error: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Name of the module the error originates from.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. }
            | Error::Dimension { .. }
            | Error::DuplicateId(_)
            | Error::InsufficientClass { .. }
            | Error::Admission(_) => "datasets",
            Error::Config(_) => "config",
            Error::Training(_) | Error::State(_) | Error::Evaluation(_) => "classifier",
            Error::MissingPrototype(_) | Error::Calibration(_) => "confidence",
            Error::Threshold(_) => "threshold",
            Error::Report(_) => "report",
        }
    }

    /// True for errors caused by input data rather than configuration or
    /// runtime failures.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Dimension { .. }
                | Error::DuplicateId(_)
                | Error::InsufficientClass { .. }
        )
    }
}
