//! JSON/HTTP service over the tag-cloud engine.
//!
//! Clients upload CSV datasets, define a schema, and request clouds. Every
//! rendered cloud is stored under a permalink and can be fetched again as
//! JSON or as an embeddable HTML fragment.

pub mod embed;
pub mod pipeline;
pub mod query;
pub mod registry;
pub mod routes;

use std::net::SocketAddr;
use std::path::PathBuf;

pub use pipeline::{execute, permalink_id, Limits, PipelineError};
pub use query::{CloudBody, CloudQuery, CloudResponse, FontRange, HintedItem, LayoutSpec, Metrics, Rollup};
pub use routes::{app, router, AppState};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

/// Server settings, usually read from the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub ui_dir: Option<PathBuf>,
    pub limits: Limits,
}

impl ServerConfig {
    /// Reads `TAGCUBE_ADDR`, `TAGCUBE_UI_DIR` and `TAGCUBE_MAX_TAGS`.
    pub fn from_env() -> Result<Self, String> {
        let addr = std::env::var("TAGCUBE_ADDR").unwrap_or_else(|_| DEFAULT_ADDR.to_owned());
        let addr = addr.parse().map_err(|e| format!("TAGCUBE_ADDR `{addr}`: {e}"))?;
        let ui_dir = std::env::var_os("TAGCUBE_UI_DIR").map(PathBuf::from);
        let mut limits = Limits::default();
        if let Ok(v) = std::env::var("TAGCUBE_MAX_TAGS") {
            limits.max_tags = v.parse().map_err(|e| format!("TAGCUBE_MAX_TAGS `{v}`: {e}"))?;
        }
        Ok(Self { addr, ui_dir, limits })
    }
}

/// Serves until ctrl-c.
pub async fn serve(config: ServerConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let app = app(AppState::new(config.limits), config.ui_dir);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
