use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{0}")]
    Validation(String),
    #[error("missing {artifact}; run `riskfuse {command}` first")]
    Prerequisite { command: &'static str, artifact: String },
    #[error("upstream failure: {0}")]
    Upstream(String),
    #[error("{0}")]
    Failed(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 success, 1 validation (and other local failures), 2 missing
    /// prerequisite, 3 upstream provider failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Failed(_) | CliError::Io { .. } => 1,
            CliError::Prerequisite { .. } => 2,
            CliError::Upstream(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn failed(e: impl std::fmt::Display) -> Self {
        CliError::Failed(e.to_string())
    }
}
