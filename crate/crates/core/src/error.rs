use thiserror::Error;

/// Errors produced anywhere in the core pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: axis {axis} is invalid for shape {shape:?}")]
    InvalidAxis { op: &'static str, axis: usize, shape: Vec<usize> },
    #[error("{op}: index {index} out of range for extent {extent}")]
    IndexOutOfRange { op: &'static str, index: usize, extent: usize },
    #[error("{op}: length mismatch ({detail})")]
    LengthMismatch { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
