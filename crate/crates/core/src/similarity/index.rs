//! Exact top-N cosine search.
//!
//! Candidates are screened with f32 dot products of unit-normalized rows
//! (one sgemm per block of queries in batch mode) and then rescored with
//! the canonical f64 cosine. The screening error of a unit-vector f32 dot
//! product of length d is below `(d + 2)·2⁻²⁴` whatever the summation
//! order, so keeping every row whose screened score is within twice that
//! bound of the n-th best screened score provably retains the exact top n.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::cosine::{dot, from_parts, norm};
use super::SimilarityError;
use crate::corpus::EmbeddingSpace;
use crate::exec::Execution;

const BLOCK_ROWS: usize = 128;
const SCREEN_LANES: usize = 16;

/// A neighbor by row position in the indexed space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNeighbor {
    pub image_id: String,
    pub score: f64,
}

/// The n most similar images to a seed within one embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSet {
    pub seed_id: String,
    pub space_name: String,
    pub n: usize,
    pub neighbors: Vec<ScoredNeighbor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation_terms: Option<Vec<String>>,
}

impl RecommendationSet {
    pub fn neighbor_ids(&self) -> impl Iterator<Item = &str> {
        self.neighbors.iter().map(|n| n.image_id.as_str())
    }
}

pub struct CosineIndex {
    space: Arc<EmbeddingSpace>,
    unit: Vec<f32>,
    norms: Vec<f64>,
    margin: f64,
}

impl std::fmt::Debug for CosineIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CosineIndex")
            .field("space", &self.space.name())
            .field("len", &self.len())
            .field("dimension", &self.dimension())
            .finish()
    }
}

fn screen_dot(u: &[f32], v: &[f32]) -> f32 {
    let mut acc = [0f32; SCREEN_LANES];
    let mut cu = u.chunks_exact(SCREEN_LANES);
    let mut cv = v.chunks_exact(SCREEN_LANES);
    for (a, b) in (&mut cu).zip(&mut cv) {
        for k in 0..SCREEN_LANES {
            acc[k] += a[k] * b[k];
        }
    }
    let mut s: f32 = cu
        .remainder()
        .iter()
        .zip(cv.remainder())
        .map(|(a, b)| a * b)
        .sum();
    for a in acc {
        s += a;
    }
    s
}

fn normalize_into(src: &[f32], norm: f64, dst: &mut [f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = (*s as f64 / norm) as f32;
    }
}

impl CosineIndex {
    pub fn new(space: Arc<EmbeddingSpace>) -> Self {
        Self::with_execution(space, Execution::default())
    }

    pub fn with_execution(space: Arc<EmbeddingSpace>, exec: Execution) -> Self {
        let d = space.dimension();
        let norms = exec.map_range(space.len(), |i| norm(space.row(i)));
        let mut unit = vec![0f32; space.len() * d];
        exec.for_each_chunk_mut(&mut unit, d * BLOCK_ROWS, |b, chunk| {
            for (k, row) in chunk.chunks_mut(d).enumerate() {
                let i = b * BLOCK_ROWS + k;
                normalize_into(space.row(i), norms[i], row);
            }
        });
        let margin = 4.0 * (d as f64 + 8.0) * 2f64.powi(-24);
        CosineIndex {
            space,
            unit,
            norms,
            margin,
        }
    }

    pub fn space(&self) -> &EmbeddingSpace {
        &self.space
    }

    pub fn space_arc(&self) -> &Arc<EmbeddingSpace> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.space.dimension()
    }

    fn unit_row(&self, i: usize) -> &[f32] {
        let d = self.dimension();
        &self.unit[i * d..(i + 1) * d]
    }

    /// Canonical cosine between two rows.
    pub fn score(&self, i: usize, j: usize) -> f64 {
        from_parts(
            dot(self.space.row(i), self.space.row(j)),
            self.norms[i],
            self.norms[j],
        )
    }

    fn cmp_neighbors(&self, a: &Neighbor, b: &Neighbor) -> Ordering {
        b.score
            .total_cmp(&a.score)
            .then_with(|| self.space.ids()[a.index].cmp(&self.space.ids()[b.index]))
    }

    /// Exact top `n` for the raw query `q` given its screened scores.
    fn select(
        &self,
        q: &[f32],
        q_norm: f64,
        screened: &[f32],
        exclude: Option<usize>,
        n: usize,
        scratch: &mut Vec<f32>,
    ) -> Vec<Neighbor> {
        let total = self.len() - usize::from(exclude.is_some());
        let take = n.min(total);
        if take == 0 {
            return Vec::new();
        }
        let keep = |j: usize| Some(j) != exclude;
        let candidates: Vec<usize> = if take == total {
            (0..self.len()).filter(|&j| keep(j)).collect()
        } else {
            scratch.clear();
            scratch.extend_from_slice(screened);
            if let Some(e) = exclude {
                scratch[e] = f32::NEG_INFINITY;
            }
            let (_, nth, _) = scratch.select_nth_unstable_by(take - 1, |a, b| b.total_cmp(a));
            let threshold = *nth as f64 - self.margin;
            (0..self.len())
                .filter(|&j| keep(j) && screened[j] as f64 >= threshold)
                .collect()
        };
        let mut out: Vec<Neighbor> = candidates
            .into_iter()
            .map(|j| Neighbor {
                index: j,
                score: from_parts(dot(q, self.space.row(j)), q_norm, self.norms[j]),
            })
            .collect();
        out.sort_by(|a, b| self.cmp_neighbors(a, b));
        out.truncate(take);
        out
    }

    /// Exact top `n` neighbors of row `i`, excluding itself.
    pub fn top_n_of(&self, i: usize, n: usize) -> Vec<Neighbor> {
        let q = self.unit_row(i);
        let screened: Vec<f32> = (0..self.len())
            .map(|j| screen_dot(q, self.unit_row(j)))
            .collect();
        self.select(
            self.space.row(i),
            self.norms[i],
            &screened,
            Some(i),
            n,
            &mut Vec::new(),
        )
    }

    /// Exact top `n` rows for an arbitrary query vector.
    pub fn top_n_vector(
        &self,
        query: &[f32],
        n: usize,
        exclude: Option<usize>,
    ) -> Result<Vec<Neighbor>, SimilarityError> {
        if query.len() != self.dimension() {
            return Err(SimilarityError::DimensionMismatch {
                left: query.len(),
                right: self.dimension(),
            });
        }
        let q_norm = norm(query);
        if q_norm == 0.0 || !q_norm.is_finite() {
            return Err(SimilarityError::ZeroNorm);
        }
        let mut unit = vec![0f32; query.len()];
        normalize_into(query, q_norm, &mut unit);
        let screened: Vec<f32> = (0..self.len())
            .map(|j| screen_dot(&unit, self.unit_row(j)))
            .collect();
        Ok(self.select(query, q_norm, &screened, exclude, n, &mut Vec::new()))
    }

    /// Exact top `n` for every row, in row order.
    pub fn top_n_all(&self, n: usize, exec: Execution) -> Vec<Vec<Neighbor>> {
        let rows = self.len();
        let d = self.dimension();
        let blocks = rows.div_ceil(BLOCK_ROWS);
        exec.map_range(blocks, |b| {
            let start = b * BLOCK_ROWS;
            let m = BLOCK_ROWS.min(rows - start);
            let mut scores = vec![0f32; m * rows];
            // SAFETY: all pointers cover m×d, d×rows and m×rows elements with the given strides.
            unsafe {
                matrixmultiply::sgemm(
                    m,
                    d,
                    rows,
                    1.0,
                    self.unit[start * d..].as_ptr(),
                    d as isize,
                    1,
                    self.unit.as_ptr(),
                    1,
                    d as isize,
                    0.0,
                    scores.as_mut_ptr(),
                    rows as isize,
                    1,
                );
            }
            let mut scratch = Vec::with_capacity(rows);
            (0..m)
                .map(|k| {
                    let i = start + k;
                    self.select(
                        self.space.row(i),
                        self.norms[i],
                        &scores[k * rows..(k + 1) * rows],
                        Some(i),
                        n,
                        &mut scratch,
                    )
                })
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect()
    }

    pub fn to_scored(&self, neighbors: &[Neighbor]) -> Vec<ScoredNeighbor> {
        neighbors
            .iter()
            .map(|nb| ScoredNeighbor {
                image_id: self.space.ids()[nb.index].clone(),
                score: nb.score,
            })
            .collect()
    }

    pub fn recommend(&self, seed_id: &str, n: usize) -> Result<RecommendationSet, SimilarityError> {
        if n == 0 {
            return Err(SimilarityError::InvalidN);
        }
        let i = self
            .space
            .position(seed_id)
            .ok_or_else(|| SimilarityError::UnknownSeed(seed_id.to_string()))?;
        Ok(RecommendationSet {
            seed_id: seed_id.to_string(),
            space_name: self.space.name().to_string(),
            n,
            neighbors: self.to_scored(&self.top_n_of(i, n)),
            explanation_terms: None,
        })
    }
}
