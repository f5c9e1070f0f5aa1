use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STAGE: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: filtergen::Error,
    },
    #[error(transparent)]
    Core(#[from] filtergen::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn core(&self) -> Option<&filtergen::Error> {
        match self {
            CliError::Stage { source, .. } | CliError::Core(source) => Some(source),
            _ => None,
        }
    }

    /// 2 for configuration errors, 4 when a sampling budget ran out, 3
    /// otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ if matches!(self.core(), Some(filtergen::Error::Budget(_))) => EXIT_BUDGET,
            _ => EXIT_STAGE,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
