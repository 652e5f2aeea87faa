use std::path::PathBuf;

/// Failures of the runner. Configuration problems map to exit code 2,
/// everything else to 1.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: domkl_core::Error,
    },

    #[error(transparent)]
    Core(#[from] domkl_core::Error),
}

impl SimError {
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config { .. } | Self::Invalid(_))
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_config() {
            2
        } else {
            1
        }
    }
}

pub type SimResult<T> = std::result::Result<T, SimError>;
