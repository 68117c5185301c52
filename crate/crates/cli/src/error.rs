use thiserror::Error;

use skillforge_core::corpus::CorpusError;
use skillforge_core::metrics::MetricError;
use skillforge_modelkit::RecipeError;

/// Every failure maps onto one of three exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training error: {0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Training(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::ScorerUnavailable(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<RecipeError> for CliError {
    fn from(e: RecipeError) -> Self {
        match e {
            RecipeError::MissingCorpus { .. } | RecipeError::Format { .. } => CliError::Data(e.to_string()),
            RecipeError::Io { .. } | RecipeError::Artifact { .. } => CliError::Data(e.to_string()),
            RecipeError::Train { .. } | RecipeError::Backend { .. } => CliError::Training(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
