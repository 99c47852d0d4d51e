use lsdn_core::eval::EvalError;
use lsdn_core::games::GameError;
use lsdn_core::gradcore::GradError;
use lsdn_core::lsdn::LsdnError;
use lsdn_core::sdekit::SdeError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("training failed: {0}")]
    Training(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("property suite failed: {0}")]
    SuiteFailed(String),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Training(_) | CliError::Numeric(_) => 2,
            CliError::SuiteFailed(_) => 3,
        }
    }
}

impl From<LsdnError> for CliError {
    fn from(e: LsdnError) -> Self {
        match e {
            LsdnError::Config(_)
            | LsdnError::Argument(_)
            | LsdnError::EmptyDataset
            | LsdnError::Game(_) => CliError::Config(e.to_string()),
            LsdnError::NonFinite { .. } => CliError::Training(e.to_string()),
            LsdnError::Sde(_) | LsdnError::Grad(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        match e {
            GameError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Game(g) => g.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<GradError> for CliError {
    fn from(e: GradError) -> Self {
        match e {
            GradError::Io { path, source } => CliError::Io { path, source },
            GradError::Checkpoint(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<SdeError> for CliError {
    fn from(e: SdeError) -> Self {
        CliError::Numeric(e.to_string())
    }
}
