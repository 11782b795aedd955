use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown level {level:?} for covariate {covariate:?}")]
    UnknownLevel { covariate: String, level: String },

    #[error("unknown name {0:?}")]
    UnknownName(String),

    /// A request field failed validation; `field` is a dotted path.
    #[error("{field}: {message}")]
    Field { field: String, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("diagnostics failed: {0}")]
    Diagnostics(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }
}
