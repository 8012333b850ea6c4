use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at component {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("class {class} has no training samples")]
    EmptyClass { class: usize },

    #[error("class {class} has {count} samples, at least {required} required")]
    ClassTooSmall { class: usize, count: usize, required: usize },

    #[error("degenerate dataset: {0}")]
    Degenerate(String),

    #[error("SMO did not converge within {passes} passes (best dual objective {best_objective})")]
    NotConverged { passes: usize, best_objective: f64 },

    #[error("non-finite training error at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("kappa is undefined: chance agreement equals 1")]
    KappaUndefined,

    #[error("operation requires a linear kernel, model uses `{kernel}`")]
    NotLinear { kernel: String },

    #[error("decision scheme `{0}` is not available for this model")]
    SchemeUnavailable(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("model format: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}
