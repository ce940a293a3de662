use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] sysid_core::Error),

    #[error("gradient check failed: max relative error {0:e}")]
    GradientMismatch(f64),
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::GradientMismatch(_) => EXIT_NUMERICAL,
            CliError::Core(e) => {
                if e.is_numerical() {
                    EXIT_NUMERICAL
                } else if e.is_io() || matches!(e.root_cause(), sysid_core::Error::Format(_)) {
                    EXIT_IO
                } else {
                    EXIT_CONFIG
                }
            }
        }
    }
}
