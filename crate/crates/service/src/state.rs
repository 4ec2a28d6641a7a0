use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use capsight_core::corpus::{ArtifactStore, CAPTION_SPACE};
use capsight_core::textlab::HedgeLexicon;
use capsight_core::CorpusSnapshot;
use capsight_ingest::Config;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Root that `source_path`s resolve against.
    pub image_root: PathBuf,
    pub thumbnail_dir: PathBuf,
    pub thumbnail_long_side: u32,
    pub thumbnail_quality: u8,
    pub allowed_origins: Vec<String>,
    pub default_space: String,
    /// Token cap reported by `/api/stats`.
    pub token_cap: u32,
    pub hedges: HedgeLexicon,
}

impl ServiceConfig {
    pub fn new(image_root: impl Into<PathBuf>, thumbnail_dir: impl Into<PathBuf>) -> Self {
        let server = capsight_ingest::config::ServerConfig::default();
        ServiceConfig {
            image_root: image_root.into(),
            thumbnail_dir: thumbnail_dir.into(),
            thumbnail_long_side: server.thumbnail_long_side,
            thumbnail_quality: server.thumbnail_quality,
            allowed_origins: server.allowed_origins,
            default_space: CAPTION_SPACE.to_string(),
            token_cap: capsight_ingest::config::DEFAULT_MAX_TOKENS,
            hedges: HedgeLexicon::default(),
        }
    }

    pub fn from_config(cfg: &Config, hedges: HedgeLexicon) -> Self {
        let store = ArtifactStore::new(&cfg.paths.artifacts);
        ServiceConfig {
            image_root: cfg.paths.images.clone(),
            thumbnail_dir: store.thumbnails_dir(),
            thumbnail_long_side: cfg.server.thumbnail_long_side,
            thumbnail_quality: cfg.server.thumbnail_quality,
            allowed_origins: cfg.server.allowed_origins.clone(),
            default_space: cfg.cluster.space.clone(),
            token_cap: cfg.caption.max_tokens,
            hedges,
        }
    }
}

/// The snapshot currently served and the version clients see for it.
#[derive(Clone)]
pub struct Served {
    pub snapshot: Arc<CorpusSnapshot>,
    pub version: u64,
}

pub(crate) struct AppState {
    current: RwLock<Served>,
    pub(crate) config: ServiceConfig,
}

/// Shared handle to the running service state.
///
/// Requests clone the current [`Served`] once and answer entirely from it, so
/// a swap never mixes two snapshots within one response.
#[derive(Clone)]
pub struct ServiceHandle {
    pub(crate) state: Arc<AppState>,
}

impl ServiceHandle {
    pub fn new(snapshot: CorpusSnapshot, config: ServiceConfig) -> Self {
        let version = snapshot.version();
        ServiceHandle {
            state: Arc::new(AppState {
                current: RwLock::new(Served {
                    snapshot: Arc::new(snapshot),
                    version,
                }),
                config,
            }),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.state.config
    }

    pub fn current(&self) -> Served {
        self.state.current.read().expect("snapshot lock").clone()
    }

    pub fn version(&self) -> u64 {
        self.current().version
    }

    /// Replaces the served snapshot and returns the previous version.
    ///
    /// The new version is the snapshot's own version or the previous one plus
    /// one, whichever is larger, so it strictly increases on every swap.
    pub fn swap_snapshot(&self, snapshot: CorpusSnapshot) -> u64 {
        let mut cur = self.state.current.write().expect("snapshot lock");
        let previous = cur.version;
        *cur = Served {
            version: snapshot.version().max(previous + 1),
            snapshot: Arc::new(snapshot),
        };
        log::info!("serving snapshot version {} (was {previous})", cur.version);
        previous
    }
}
