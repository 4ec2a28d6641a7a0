//! Batch ingestion: scanning images into a manifest, captioning them through a
//! multimodal provider, embedding the captions and importing external vectors.
//!
//! Providers sit behind [`CaptionProvider`] and [`EmbeddingProvider`]. The
//! pipeline fans requests out with bounded concurrency, retries transient
//! failures with exponential backoff, treats content-policy refusals as final
//! and persists every completed item before moving on, so an interrupted run
//! resumes without repeating finished requests.

pub mod config;
pub mod fixture;
pub mod mock;
pub mod openai;
pub mod pipeline;
pub mod provider;
pub mod resize;
pub mod retry;
pub mod source;

use std::path::PathBuf;

use capsight_core::corpus::CorpusError;
use capsight_core::textlab::TextlabError;

pub use config::{Config, ProviderKind, RetryPolicy};
pub use mock::{deterministic_mock_embedding, MockCaptionProvider, MockEmbeddingProvider, MockScript};
pub use pipeline::{
    caption_corpus, caption_store, embed_corpus, embed_store, import_vectors, ingest_directory,
    CaptionReport, CaptionSettings, EmbedReport, EmbedSettings, ScanReport,
};
pub use provider::{CaptionOutput, CaptionProvider, CaptionRequest, EmbeddingProvider, ProviderResult};
pub use resize::{compute_target_dimensions, ResizeRule};
pub use source::{FsImageSource, ImageSource, StubImageSource};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Textlab(#[from] TextlabError),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("provider returned a {found}-dimensional vector for {id}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("worker task failed: {0}")]
    Task(String),
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.into(),
            source,
        }
    }
}

/// The captioner selected by `[caption] provider`.
pub fn caption_provider(cfg: &Config) -> Result<Box<dyn CaptionProvider>, IngestError> {
    Ok(match cfg.caption.provider {
        ProviderKind::Mock => Box::new(MockCaptionProvider::new()),
        ProviderKind::Openai => Box::new(openai::OpenAiCaptionProvider::from_config(&cfg.caption)?),
    })
}

/// The embedder selected by `[embedding] provider`.
pub fn embedding_provider(cfg: &Config) -> Result<Box<dyn EmbeddingProvider>, IngestError> {
    Ok(match cfg.embedding.provider {
        ProviderKind::Mock => Box::new(MockEmbeddingProvider::new(cfg.embedding.dimension, cfg.embedding.seed)),
        ProviderKind::Openai => Box::new(openai::OpenAiEmbeddingProvider::from_config(&cfg.embedding)?),
    })
}
