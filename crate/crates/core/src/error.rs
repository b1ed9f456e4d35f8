use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FddError>;

#[derive(Debug, Error)]
pub enum FddError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("missing weight tensor `{0}`")]
    MissingWeight(String),

    #[error("weight tensor `{name}` has dims {found:?}, expected {expected:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("gallery is locked: {0}")]
    Locked(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl FddError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        FddError::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        FddError::Param(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        FddError::Format(msg.into())
    }
}
