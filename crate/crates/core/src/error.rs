use thiserror::Error;

/// Errors raised by the numeric, sampling and evaluation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape for {op}: {shape:?} ({reason})")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("query {index} is out of bounds: {detail}")]
    QueryOutOfBounds { index: usize, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible sampler configuration: {0}")]
    Infeasible(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Crowd(#[from] crate::crowd::CrowdError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
