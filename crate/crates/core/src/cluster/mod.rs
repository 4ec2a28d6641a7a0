//! Ward clustering of an embedding space, K-cuts, leaf ordering, keyness
//! labels and a 2D projection for export.

mod assign;
mod distances;
mod project;
mod ward;

use thiserror::Error;

use crate::textlab::TextlabError;

pub use assign::{
    cluster_and_label, cut, label_clusters, order_clusters, ClusterAssignment, ClusterSummary, DEFAULT_K,
    LABEL_MIN_TARGET_COUNT, LABEL_TERMS,
};
pub use distances::{
    condensed_index, squared_euclidean, CondensedDistances, DistanceValue, Points,
};
pub use project::{project_2d, project_2d_with, Projection2D};
pub use ward::{
    ward_cluster, ward_cluster_with, ward_from_distances, Dendrogram, Merge, WardStorage,
    AUTO_F64_LIMIT_BYTES,
};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least {needed} vectors, found {found}")]
    TooFewItems { needed: usize, found: usize },
    #[error("k = {k} is outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("invalid dendrogram: {0}")]
    InvalidDendrogram(String),
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Textlab(#[from] TextlabError),
}
