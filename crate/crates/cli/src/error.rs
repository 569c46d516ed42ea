use std::net::SocketAddr;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("insufficient baseline: {0}")]
    InsufficientBaseline(String),
    #[error("address {0} is already in use")]
    PortBusy(SocketAddr),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Service(#[from] palmwatch_service::ServiceError),
}

impl CliError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::InsufficientBaseline(_) => 3,
            CliError::PortBusy(_) => 4,
            CliError::Io { .. } | CliError::Input(_) | CliError::Service(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
