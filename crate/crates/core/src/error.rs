use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("filter design: {0}")]
    FilterDesign(String),

    #[error("non-finite value produced by {op}")]
    NumericalFault { op: &'static str },

    #[error("unknown batch-norm domain {0}")]
    UnknownDomain(u32),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("{path}: {reason}")]
    Data { path: PathBuf, reason: String },

    #[error("training: {0}")]
    Training(String),

    #[error("degenerate statistic: {0}")]
    Degenerate(&'static str),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for faults raised by the finite-value checks in the kernel.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NumericalFault { .. })
    }

    /// True for errors caused by the input data rather than by usage.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::Data { .. } | Error::Io { .. } | Error::Checkpoint(_) | Error::Insufficient(_)
        )
    }
}
