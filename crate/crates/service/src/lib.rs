//! Read-only JSON API over an immutable [`CorpusSnapshot`].
//!
//! | route | body |
//! |---|---|
//! | `GET /api/images?page&page_size` | [`api::ImagesPage`] |
//! | `GET /api/images/{id}` | [`api::ImageDetail`] |
//! | `GET /api/images/{id}/file` | original image bytes |
//! | `GET /api/images/{id}/thumbnail` | JPEG, long side 256 by default, disk-cached |
//! | `GET /api/images/{id}/recommendations?n&space` | [`RecommendationSet`](capsight_core::RecommendationSet) |
//! | `GET /api/clusters` | [`api::ClustersResponse`] |
//! | `GET /api/clusters/{id}/images?page&page_size` | [`api::ClusterImages`] |
//! | `GET /api/search?q&limit` | [`api::SearchResponse`] |
//! | `GET /api/projection` | [`api::ProjectionResponse`] |
//! | `GET /api/stats` | [`api::StatsResponse`] |
//!
//! Every response carries `x-snapshot-version`. Errors are
//! `{"error": {"code", "message"}}` with codes `not_found` (404), `bad_param`
//! (400, including unknown query parameters) and `artifact_missing` (409).

pub mod api;
mod error;
mod state;
pub mod thumbs;

use std::net::SocketAddr;

use axum::http::{HeaderName, HeaderValue, Method};
use axum::routing::get;
use axum::Router;
use capsight_core::CorpusSnapshot;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use api::VERSION_HEADER;
pub use error::ApiError;
pub use state::{Served, ServiceConfig, ServiceHandle};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid CORS origin {0:?}")]
    Origin(String),
    #[error("server stopped: {0}")]
    Io(#[from] std::io::Error),
}

fn cors(origins: &[String]) -> Result<CorsLayer, ServiceError> {
    let values = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|_| ServiceError::Origin(o.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorsLayer::new()
        .allow_origin(AllowOrigin::list(values))
        .allow_methods([Method::GET])
        .expose_headers([HeaderName::from_static(VERSION_HEADER)]))
}

impl ServiceHandle {
    /// The API routes with CORS applied.
    pub fn router(&self) -> Result<Router, ServiceError> {
        let routes = Router::new()
            .route("/api/images", get(api::list_images))
            .route("/api/images/{id}", get(api::get_image))
            .route("/api/images/{id}/file", get(api::image_file))
            .route("/api/images/{id}/thumbnail", get(api::image_thumbnail))
            .route("/api/images/{id}/recommendations", get(api::recommendations))
            .route("/api/clusters", get(api::clusters))
            .route("/api/clusters/{id}/images", get(api::cluster_images))
            .route("/api/search", get(api::search))
            .route("/api/projection", get(api::projection))
            .route("/api/stats", get(api::stats))
            .fallback(api::fallback)
            .with_state(self.clone());
        Ok(routes.layer(cors(&self.config().allowed_origins)?))
    }
}

/// A server running on a background task. Dropping it stops the server.
pub struct RunningServer {
    addr: SocketAddr,
    handle: ServiceHandle,
    shutdown: oneshot::Sender<()>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn handle(&self) -> &ServiceHandle {
        &self.handle
    }

    /// See [`ServiceHandle::swap_snapshot`].
    pub fn swap_snapshot(&self, snapshot: CorpusSnapshot) -> u64 {
        self.handle.swap_snapshot(snapshot)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(self) -> Result<(), ServiceError> {
        let _ = self.shutdown.send(());
        Self::join(self.task).await
    }

    /// Runs until the server stops on its own.
    pub async fn wait(self) -> Result<(), ServiceError> {
        // Dropping the sender would trigger the graceful shutdown.
        let RunningServer { shutdown, task, .. } = self;
        let result = Self::join(task).await;
        drop(shutdown);
        result
    }

    async fn join(task: JoinHandle<std::io::Result<()>>) -> Result<(), ServiceError> {
        match task.await {
            Ok(r) => Ok(r?),
            Err(e) => Err(ServiceError::Io(std::io::Error::other(e))),
        }
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `handle` in the background.
pub async fn serve(handle: ServiceHandle, addr: &str) -> Result<RunningServer, ServiceError> {
    let router = handle.router()?;
    let listener = TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    let local = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    log::info!("listening on http://{local}");
    Ok(RunningServer {
        addr: local,
        handle,
        shutdown: tx,
        task,
    })
}
