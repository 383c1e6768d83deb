//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any ctrl-core module.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    Dimension { op: &'static str, lhs: String, rhs: String },

    /// A caller violated an argument contract (bad axis, empty list, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A parameter was used in an update without a populated gradient.
    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),

    /// The same parameter name was registered twice.
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),

    /// Lookup of a feature or parameter key failed.
    #[error("unknown key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey { key: String, suggestion: Option<String> },

    /// A text input file failed to parse.
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    /// A binary file has the wrong magic, version, or layout.
    #[error("bad file format in {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Two forward passes of a loss disagreed during a gradient check.
    #[error("loss function is not deterministic: {0} != {1}")]
    NonDeterministicLoss(f64, f64),

    /// Training produced a non-finite loss.
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: format!("{lhs:?}"),
            rhs: format!("{rhs:?}"),
        }
    }
}
