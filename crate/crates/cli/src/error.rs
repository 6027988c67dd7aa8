use std::io;
use std::path::PathBuf;

use crack_repair::profile::ProfileError;
use crack_repair::repair::RepairError;
use crack_repair::specimen::SpecimenError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Repair(#[from] RepairError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 0 success, 2 config, 3 no crack found, 4 I/O, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Repair(e) => match e {
                RepairError::NoCrackFound(_) | RepairError::AllPointsDropped => 3,
                RepairError::InvalidSpeed(_)
                | RepairError::Profile(ProfileError::InsufficientSamples | ProfileError::InvalidCalibration(_))
                | RepairError::Specimen(
                    SpecimenError::InvalidSpec(_) | SpecimenError::InvalidParams(_) | SpecimenError::PathOutsideGrid(_),
                ) => 2,
                _ => 1,
            },
        }
    }
}
