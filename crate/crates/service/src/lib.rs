//! HTTP backend for three-pass step annotation.
//!
//! Each project lives in its own directory under a data root:
//!
//! ```text
//! data/
//!   cooking/
//!     project.json     # videos, lexicon path, frame layout
//!     lexicon.json
//!     store.json       # workflow state, revisions, drafts
//!     frames/<video>/<rate>/000000.jpg
//! ```
//!
//! Writes are acknowledged only after `store.json` has been atomically
//! replaced, so restarting the service always reloads the last acknowledged
//! revision of every video.

mod error;
mod http;
mod model;
mod project;
mod store;

use std::net::SocketAddr;
use std::path::Path;

pub use error::ServiceError;
pub use http::{router, DEFAULT_FPS};
pub use model::{
    rate_label, DraftAnnotation, DraftSegment, ProjectConfig, VideoConfig, VideoRecord, WorkflowState,
};
pub use project::{
    AnnotationView, FrameList, FrameRef, Project, ProjectRegistry, VideoSummary, WriteAck, PROJECT_FILE,
};
pub use store::{read_store, write_store, StoreFile, STORE_FORMAT};

/// Loads every project under `data_dir` and serves until `shutdown`
/// resolves. `on_bound` receives the bound address (useful with port 0).
pub async fn serve(
    addr: SocketAddr,
    data_dir: &Path,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let registry = ProjectRegistry::open(data_dir)?;
    tracing::info!(projects = registry.len(), dir = %data_dir.display(), "projects loaded");
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(registry))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}
