use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular model: {0}")]
    SingularModel(String),

    /// ISTA with the unit step diverged; the safe step fixes this.
    #[error("step size: {0}")]
    StepSize(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    /// Configuration problem; `field` is the JSON path of the offending entry.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by numerical blow-up rather than bad input.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence(_) | Error::StepSize(_))
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::InvalidArgument(_))
    }
}
