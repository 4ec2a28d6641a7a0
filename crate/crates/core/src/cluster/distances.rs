//! Pairwise squared Euclidean distances in condensed (upper-triangle) form.

use crate::corpus::EmbeddingSpace;
use crate::exec::Execution;

const LANES: usize = 8;

fn sq_dist_generic(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..LANES {
            let d = x[k] as f64 - y[k] as f64;
            acc[k] += d * d;
        }
    }
    for (k, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        let d = *x as f64 - *y as f64;
        acc[k] += d * d;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn sq_dist_avx2(a: &[f32], b: &[f32]) -> f64 {
    sq_dist_generic(a, b)
}

/// Squared Euclidean distance with a fixed summation order, so the value is
/// identical whichever instruction set runs it.
pub fn squared_euclidean(a: &[f32], b: &[f32]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2.
        return unsafe { sq_dist_avx2(a, b) };
    }
    sq_dist_generic(a, b)
}

/// A borrowed row-major point set.
#[derive(Debug, Clone, Copy)]
pub struct Points<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> Points<'a> {
    /// `None` when `dim` is zero or does not divide `data.len()`.
    pub fn new(data: &'a [f32], dim: usize) -> Option<Self> {
        (dim > 0 && data.len() % dim == 0).then_some(Points { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

impl<'a> From<&'a EmbeddingSpace> for Points<'a> {
    fn from(space: &'a EmbeddingSpace) -> Self {
        Points {
            data: space.as_flat(),
            dim: space.dimension(),
        }
    }
}

/// Position of pair (i, j), i < j, in a condensed matrix over `n` items.
#[inline]
pub fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    n * i - i * (i + 1) / 2 + (j - i - 1)
}

/// Element type of a condensed matrix.
pub trait DistanceValue: Copy + Send + Sync + Default + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl DistanceValue for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl DistanceValue for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Squared Euclidean distance for every unordered pair i < j.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedDistances<T = f64> {
    n: usize,
    d: Vec<T>,
}

impl<T: DistanceValue> CondensedDistances<T> {
    pub fn from_points(points: Points<'_>, exec: Execution) -> Self {
        Self::from_rows(points.len(), |i| points.row(i), exec)
    }

    pub fn from_rows<'a, F>(n: usize, row: F, exec: Execution) -> Self
    where
        F: Fn(usize) -> &'a [f32] + Sync + Send,
    {
        let mut d = vec![T::default(); n * n.saturating_sub(1) / 2];
        // Split the triangle into per-row slices: row i holds pairs (i, i+1..n).
        let mut rows: Vec<(usize, &mut [T])> = Vec::with_capacity(n);
        let mut rest = d.as_mut_slice();
        for i in 0..n.saturating_sub(1) {
            let (head, tail) = rest.split_at_mut(n - i - 1);
            rows.push((i, head));
            rest = tail;
        }
        exec.for_each_chunk_mut(&mut rows, 16, |_, chunk| {
            for (i, out) in chunk.iter_mut() {
                let a = row(*i);
                for (k, slot) in out.iter_mut().enumerate() {
                    *slot = T::from_f64(squared_euclidean(a, row(*i + 1 + k)));
                }
            }
        });
        CondensedDistances { n, d }
    }

    pub fn from_condensed(n: usize, d: Vec<T>) -> Option<Self> {
        (d.len() == n * n.saturating_sub(1) / 2
            && d.iter().all(|v| v.to_f64().is_finite() && v.to_f64() >= 0.0))
        .then_some(CondensedDistances { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.d[condensed_index(self.n, i, j)].to_f64(),
            std::cmp::Ordering::Greater => self.d[condensed_index(self.n, j, i)].to_f64(),
        }
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.d[condensed_index(self.n, i, j)] = T::from_f64(v);
    }

    pub fn as_slice(&self) -> &[T] {
        &self.d
    }
}
