//! Errors surfaced by the command line, and their process exit codes.

use thiserror::Error;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<CliError>,
    },
    #[error(transparent)]
    Core(#[from] amcdef_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        CliError::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use amcdef_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Stage { source, .. } => source.exit_code(),
            CliError::Core(E::Format(_)) => EXIT_FORMAT,
            CliError::Core(E::Divergence(_) | E::NonConvergence { .. }) => EXIT_DIVERGENCE,
            CliError::Core(E::InvalidArgument(_)) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}
