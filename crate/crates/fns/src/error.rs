use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Core(#[from] fns_core::Error),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        CliError::Csv {
            path: path.into(),
            source,
        }
    }

    /// 1 for bad input (flags, configs, parameters), 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        use fns_core::Error as E;
        match self {
            CliError::Validation(_) => 1,
            CliError::Core(
                E::InvalidConfig(_)
                | E::DomainError(_)
                | E::InvalidGrid(_)
                | E::NonPowerOfTwoSize(_)
                | E::NonPositiveCoefficient { .. }
                | E::IndexOutOfRange(..)
                | E::ZeroRhs
                | E::NotConstantStencil,
            ) => 1,
            _ => 2,
        }
    }
}
