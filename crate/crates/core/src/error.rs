use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A caller violated an operation's precondition.
    #[error("contract error: {0}")]
    Contract(String),

    #[error("index out of bounds: {0}")]
    Bounds(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Input data is malformed, incomplete, or too short.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// Optimization hit non-finite values.
    #[error("training error: {0}")]
    Training(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("unknown {kind}: {name}")]
    Lookup { kind: &'static str, name: String },

    #[error("version error: {0}")]
    Version(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn ingestion(msg: impl Into<String>) -> Self {
        Error::Ingestion(msg.into())
    }
}
