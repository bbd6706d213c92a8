use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("{metric}: missing required input `{artifact}`")]
    MissingInput {
        metric: &'static str,
        artifact: &'static str,
    },
    #[error("image `{id}`: {reason}")]
    Image { id: String, reason: String },
    #[error("{metric}: numeric failure: {reason}")]
    Numeric { metric: &'static str, reason: String },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn image(id: &str, reason: impl Into<String>) -> Self {
        Error::Image {
            id: id.into(),
            reason: reason.into(),
        }
    }
}
