//! Cloud-side service for palm telemetry.
//!
//! Gateways push raw samples, edge digests and assessments; operators sign
//! in, browse farms and devices, query decimated history, trace packet loss,
//! manage devices and receive notifications. Every mutating request is
//! audited, and live readings are fanned out over a WebSocket stream.
//!
//! # HTTP API
//!
//! - `POST /auth/login` - `{user_id, password}` to a bearer token
//! - `GET /health`
//! - `GET /farms`, `GET /farms/{id}/overview`
//! - `GET /devices`, `POST /devices`, `GET /devices/{id}`, `PUT /devices/{id}`
//! - `GET /devices/{id}/readings?from&to&max_points`
//! - `GET /devices/{id}/assessments`
//! - `GET /devices/{id}/packets?from&to`
//! - `GET /notifications?unread`, `POST /notifications` (mark read)
//! - `POST /ingest/batch`, `POST /ingest/digests`, `POST /ingest/assessments` (gateway token)
//! - `GET /audit` (admin)
//! - `GET /stream` - WebSocket, see [`stream`]
//!
//! # Example
//!
//! ```rust,no_run
//! use palmwatch_service::{ServiceConfig, Service};
//!
//! #[tokio::main]
//! async fn main() -> Result<(), Box<dyn std::error::Error>> {
//!     let config = ServiceConfig::from_path("service.toml".as_ref())?;
//!     let service = Service::bind(config).await?;
//!     service.run(std::future::pending()).await?;
//!     Ok(())
//! }
//! ```

pub mod api;
pub mod auth;
pub mod clock;
pub mod config;
pub mod error;
pub mod hub;
pub mod store;
pub mod stream;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use thiserror::Error;
use tokio::net::TcpListener;

pub use api::{router, AppState};
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::ServiceConfig;
pub use store::Store;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error("address {0} is already in use")]
    AddrInUse(SocketAddr),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Serve(std::io::Error),
}

/// A bound, not yet running, service.
pub struct Service {
    state: AppState,
    listener: TcpListener,
}

impl Service {
    pub async fn bind(config: ServiceConfig) -> Result<Self, ServiceError> {
        Self::bind_with_clock(config, Arc::new(SystemClock)).await
    }

    pub async fn bind_with_clock(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        let addr = config.bind;
        let listener = TcpListener::bind(addr).await.map_err(|source| {
            if source.kind() == std::io::ErrorKind::AddrInUse {
                ServiceError::AddrInUse(addr)
            } else {
                ServiceError::Bind { addr, source }
            }
        })?;
        let state = AppState::new(config, clock)?;
        Ok(Self { state, listener })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    /// Serves until `shutdown` resolves, then flushes the storage index.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServiceError> {
        let addr = self.local_addr();
        tracing::info!(%addr, "listening");
        let store = Arc::clone(&self.state.store);
        axum::serve(self.listener, router(self.state))
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(ServiceError::Serve)?;
        store.flush()?;
        tracing::info!("storage flushed, shut down");
        Ok(())
    }
}
