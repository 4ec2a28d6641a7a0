//! Image records, captions, embedding spaces and immutable corpus snapshots.

mod embedding;
mod fulltext;
mod manifest;
mod record;
mod snapshot;
mod store;

use std::path::PathBuf;

pub use embedding::{
    read_embedding_file, write_embedding_file, EmbeddingSpace, EmbeddingVector, EMBEDDING_MAGIC,
    EMBEDDING_VERSION, HEADER_LEN,
};
pub use fulltext::{Bm25Params, FulltextIndex, Posting, SearchHit};
pub use manifest::{load_manifest, save_manifest, Manifest, ManifestEntry, ManifestJournal};
pub use record::{word_count, Caption, ImageRecord, Status};
pub use snapshot::{
    CorpusSnapshot, EvaluationReports, SnapshotBuilder, CAPTION_SPACE, VISUAL_SPACE,
};
pub use store::ArtifactStore;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: duplicate image id {id:?}")]
    DuplicateId { id: String, line: usize },
    #[error("line {line}: invalid record {id:?}: {message}")]
    InvalidRecord {
        id: String,
        line: usize,
        message: String,
    },
    #[error("embedding file: bad magic {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("embedding file: unsupported version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("embedding file: truncated at record {record}")]
    Truncated { record: u64 },
    #[error("embedding file: {0}")]
    Format(String),
    #[error("embedding dimension must be positive")]
    ZeroDimension,
    #[error("space {space:?} is empty")]
    EmptySpace { space: String },
    #[error("vector for {id:?} has {found} components, space dimension is {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("vector for {id:?} has zero norm")]
    ZeroNorm { id: String },
    #[error("vector for {id:?} has a non-finite component")]
    NonFinite { id: String },
    #[error("space {space:?} already holds a vector for {id:?}")]
    DuplicateVector { space: String, id: String },
    #[error("{what} references unknown image {id:?}")]
    DanglingReference { what: String, id: String },
    #[error("inconsistent record {id:?}: {message}")]
    Inconsistent { id: String, message: String },
    #[error("{what}: {message}")]
    InvalidArtifact { what: String, message: String },
    #[error("query is empty after tokenization")]
    EmptyQuery,
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}
