//! Core engine for caption-surrogate search and discovery over visual collections.
//!
//! Images are represented by generated captions and captions by dense text
//! embeddings. This crate owns everything that operates on those artifacts:
//!
//! * [`corpus`]: image records, the line-delimited manifest, the binary
//!   embedding file, the BM25 caption index and immutable snapshots.
//! * [`similarity`]: exact cosine top-N recommendations and the symmetry and
//!   overlap evaluation metrics.
//! * [`textlab`]: tokenization, rule-based lemmatization and noun tagging,
//!   G² keyness, hedge detection, caption statistics and neutralization.
//! * [`cluster`]: Ward clustering via the nearest-neighbor chain, K-cuts,
//!   dendrogram-consistent ordering, keyness labels and a PCA projection.
//!
//! Batch loops run through [`exec::Execution`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod cluster;
pub mod corpus;
pub mod exec;
pub mod similarity;
pub mod textlab;

pub use corpus::{
    Caption, CorpusError, CorpusSnapshot, EmbeddingSpace, EmbeddingVector, ImageRecord, Status,
};
pub use exec::Execution;
pub use similarity::{RecommendationSet, SimilarityError};
