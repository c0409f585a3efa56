use std::path::PathBuf;

use seasonal_spline::error::Error as LibError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Lib(#[from] LibError),
}

impl CliError {
    /// 2 for anything wrong with the inputs, 3 for numerical failures, 1 when
    /// outputs cannot be written.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Config(_) => 2,
            CliError::Write { .. } => 1,
            CliError::Lib(e) => match e {
                LibError::Truncation { .. }
                | LibError::Integration(_)
                | LibError::NotConverged { .. }
                | LibError::Conditioning { .. } => 3,
                _ => 2,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
