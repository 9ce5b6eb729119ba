use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched ids, forms, dimensions or forbidden option combinations.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Training or integration produced a non-finite value.
    #[error("divergence in {context} at step {step}")]
    Divergence { context: String, step: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty data: {0}")]
    Empty(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn diverged(context: impl Into<String>, step: usize) -> Self {
        Error::Divergence {
            context: context.into(),
            step,
        }
    }
}
