//! `palmwatch serve`: run the cloud service until SIGINT or SIGTERM.

use std::future::Future;
use std::path::PathBuf;

use clap::Args;
use palmwatch_service::{Service, ServiceConfig, ServiceError};

use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Service config (TOML).
    #[arg(long)]
    pub config: PathBuf,
}

/// Binds the configured address and serves until `shutdown` resolves; the
/// storage index is flushed before returning.
pub async fn serve(args: &ServeArgs, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), CliError> {
    let config = ServiceConfig::from_path(&args.config).map_err(|e| CliError::Config(e.to_string()))?;
    let service = Service::bind(config).await.map_err(|e| match e {
        ServiceError::AddrInUse(addr) => CliError::PortBusy(addr),
        ServiceError::Config(e) => CliError::Config(e.to_string()),
        other => CliError::Service(other),
    })?;
    println!("listening on http://{}", service.local_addr());
    service.run(shutdown).await?;
    Ok(())
}

/// Resolves on Ctrl-C, or SIGTERM on Unix.
pub async fn termination() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    {
        let mut term = match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(s) => s,
            Err(_) => return ctrl_c.await,
        };
        tokio::select! {
            _ = ctrl_c => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    ctrl_c.await;
}
