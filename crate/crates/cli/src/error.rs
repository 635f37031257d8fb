use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("output directory {0} exists and is not empty")]
    OutputExists(PathBuf),

    #[error("no output directory: pass --out or set `output` in the config")]
    NoOutput,

    #[error("config asks for `{config}` but the subcommand is `{command}`")]
    ExperimentMismatch { config: String, command: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Core(#[from] quasistat::Error),

    #[error("serialisation failed: {0}")]
    Json(#[from] serde_json::Error),
}
