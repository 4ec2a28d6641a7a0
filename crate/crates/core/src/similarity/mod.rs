//! Exact cosine top-N recommendations and their evaluation metrics.

mod cosine;
mod index;
mod metrics;

use thiserror::Error;

pub use cosine::cosine;
pub use index::{CosineIndex, Neighbor, RecommendationSet, ScoredNeighbor};
pub use metrics::{
    overlap_from_neighbors, overlap_metric, symmetry_from_neighbors, symmetry_metric,
    symmetry_table, OverlapEntry, OverlapReport, SymmetryEntry, SymmetryReport,
};

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("unknown embedding space {0:?}")]
    UnknownSpace(String),
    #[error("unknown image {0:?}")]
    UnknownSeed(String),
    #[error("image {id:?} has no vector in space {space:?}")]
    NoVector { id: String, space: String },
    #[error("n must be at least 1")]
    InvalidN,
    #[error("no n values given")]
    EmptyNValues,
    #[error("embedding space {0:?} is empty")]
    EmptySpace(String),
    #[error(
        "spaces {space_a:?} and {space_b:?} cover different images \
         (missing from {space_a:?}: {missing_in_a:?}; missing from {space_b:?}: {missing_in_b:?})"
    )]
    CoverageMismatch {
        space_a: String,
        space_b: String,
        missing_in_a: Vec<String>,
        missing_in_b: Vec<String>,
    },
}
