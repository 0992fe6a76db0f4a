use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: String, source: std::io::Error },

    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),

    #[error(transparent)]
    Numerics(#[from] maisteer::Error),

    #[error("cannot write {path}: {reason}")]
    Write { path: String, reason: String },

    #[error("refusing to emit an empty table")]
    EmptyTable,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn bad(field: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}
