use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lmn_fusion::Error),

    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid config {path}: {source}")]
    ConfigParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{field}: {path} does not exist")]
    MissingInput { field: String, path: PathBuf },

    #[error("invalid config: {0}")]
    Invalid(String),

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        use lmn_fusion::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::DimensionMismatch(_) => "dimension_mismatch",
                E::InvalidMode(_) | E::InvalidArgument(_) => "invalid_argument",
                E::NoConvergence { .. } => "no_convergence",
                E::NonFinite { .. } => "non_finite",
                E::Io { .. } => "io",
                E::Format { .. } => "format",
                E::Json { .. } => "json",
            },
            CliError::ConfigRead { .. } => "config_read",
            CliError::ConfigParse { .. } => "config_parse",
            CliError::MissingInput { .. } => "missing_input",
            CliError::Invalid(_) => "invalid_config",
            CliError::Output { .. } => "output",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
