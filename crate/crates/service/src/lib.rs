//! HTTP+JSON session service. A session serves a hidden benchmark objective on
//! `[-1, 1]²`, records the trials a person submits, estimates the BO settings that
//! explain them, and continues the search with those settings in the background.
//!
//! Sessions are kept in memory and persisted to a data directory as the trajectory
//! document plus a metadata sidecar, so a restarted service resumes where it left off.

pub mod catalog;
pub mod error;
pub mod routes;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use catalog::{Catalog, Objective};
pub use error::ApiError;
pub use routes::{router, AppState};
pub use store::{Store, StoreError};

/// Environment variable naming the data directory.
pub const DATA_DIR_ENV: &str = "STRATEGIST_DATA_DIR";

/// The data directory from [`DATA_DIR_ENV`], or `./strategist-data`.
pub fn data_dir_from_env() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("strategist-data"))
}

pub fn app(dir: impl Into<PathBuf>, catalog: Catalog) -> Result<axum::Router, StoreError> {
    Ok(router(Arc::new(Store::open(dir, catalog)?)))
}

/// Serves the standard catalog on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, dir: PathBuf) -> std::io::Result<()> {
    let app = app(dir, Catalog::standard()).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
