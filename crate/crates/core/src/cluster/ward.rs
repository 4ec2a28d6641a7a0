//! Ward agglomerative clustering with the nearest-neighbor chain.

use serde::{Deserialize, Serialize};

use super::distances::{CondensedDistances, DistanceValue, Points};
use super::ClusterError;
use crate::corpus::EmbeddingSpace;
use crate::exec::Execution;

/// One agglomeration step. Leaves are nodes `0..n`; merge `k` creates node `n + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Where pairwise cluster distances live during clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WardStorage {
    /// f64 condensed matrix when it fits in [`AUTO_F64_LIMIT_BYTES`], f32 otherwise.
    #[default]
    Auto,
    CondensedF64,
    CondensedF32,
    /// No matrix: distances are recomputed from cluster centroids.
    Recompute,
}

pub const AUTO_F64_LIMIT_BYTES: usize = 512 << 20;

impl WardStorage {
    fn resolve(self, n: usize) -> WardStorage {
        match self {
            WardStorage::Auto if n * n.saturating_sub(1) / 2 * 8 <= AUTO_F64_LIMIT_BYTES => {
                WardStorage::CondensedF64
            }
            WardStorage::Auto => WardStorage::CondensedF32,
            other => other,
        }
    }
}

trait Linkage {
    fn len(&self) -> usize;
    fn dist(&self, i: usize, j: usize) -> f64;
    /// Merges cluster `x` into `y`; `size` holds sizes before the merge.
    fn merge(&mut self, x: usize, y: usize, dxy: f64, active: &[bool], size: &[usize]);
}

impl<T: DistanceValue> Linkage for CondensedDistances<T> {
    fn len(&self) -> usize {
        CondensedDistances::len(self)
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }

    fn merge(&mut self, x: usize, y: usize, dxy: f64, active: &[bool], size: &[usize]) {
        let (nx, ny) = (size[x] as f64, size[y] as f64);
        for k in 0..active.len() {
            if !active[k] || k == x || k == y {
                continue;
            }
            let nk = size[k] as f64;
            let v = ((nx + nk) * self.get(x, k) + (ny + nk) * self.get(y, k) - nk * dxy)
                / (nx + ny + nk);
            self.set(y, k, v.max(0.0));
        }
    }
}

struct Centroids {
    dim: usize,
    c: Vec<f64>,
    size: Vec<usize>,
}

impl Centroids {
    fn new(points: Points<'_>) -> Self {
        Centroids {
            dim: points.dim(),
            c: (0..points.len())
                .flat_map(|i| points.row(i).iter().map(|&v| v as f64))
                .collect(),
            size: vec![1; points.len()],
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.c[i * self.dim..(i + 1) * self.dim]
    }
}

impl Linkage for Centroids {
    fn len(&self) -> usize {
        self.size.len()
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        let (ni, nj) = (self.size[i] as f64, self.size[j] as f64);
        let sq: f64 = self
            .row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        2.0 * ni * nj / (ni + nj) * sq
    }

    fn merge(&mut self, x: usize, y: usize, _dxy: f64, _active: &[bool], size: &[usize]) {
        let (nx, ny) = (size[x] as f64, size[y] as f64);
        let d = self.dim;
        for k in 0..d {
            let cx = self.c[x * d + k];
            let cy = &mut self.c[y * d + k];
            *cy = (nx * cx + ny * *cy) / (nx + ny);
        }
        self.size[y] = size[x] + size[y];
    }
}

/// Runs the chain and returns raw merges as (slot, slot, height), in merge order.
fn nn_chain<L: Linkage>(mut link: L) -> Vec<(usize, usize, f64)> {
    let n = link.len();
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();
    let mut first_active = 0;
    for _ in 1..n {
        if chain.is_empty() {
            while !active[first_active] {
                first_active += 1;
            }
            chain.push(first_active);
        }
        let (x, y, dxy) = loop {
            let x = *chain.last().expect("non-empty chain");
            let prev = (chain.len() >= 2).then(|| chain[chain.len() - 2]);
            let (mut best, mut best_d) = match prev {
                Some(p) => (p, link.dist(x, p)),
                None => (usize::MAX, f64::INFINITY),
            };
            for (i, &is_active) in active.iter().enumerate() {
                if is_active && i != x {
                    let d = link.dist(x, i);
                    if d < best_d {
                        best = i;
                        best_d = d;
                    }
                }
            }
            if Some(best) == prev {
                chain.truncate(chain.len() - 2);
                break (x, best, best_d);
            }
            chain.push(best);
        };
        link.merge(x, y, dxy, &active, &size);
        active[x] = false;
        size[y] += size[x];
        merges.push((x, y, dxy));
    }
    merges
}

/// Sorts raw merges by height (stable) and assigns scipy-style node ids.
fn relabel(n: usize, mut raw: Vec<(usize, usize, f64)>) -> Vec<Merge> {
    raw.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    let mut size = vec![1usize; 2 * n - 1];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    raw.into_iter()
        .enumerate()
        .map(|(k, (a, b, h))| {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            let node = n + k;
            parent[ra] = node;
            parent[rb] = node;
            size[node] = size[ra] + size[rb];
            Merge {
                left: ra.min(rb),
                right: ra.max(rb),
                height: h,
                size: size[node],
            }
        })
        .collect()
}

/// Ward clustering over a precomputed condensed squared-distance matrix.
pub fn ward_from_distances<T: DistanceValue>(
    dist: CondensedDistances<T>,
) -> Result<Dendrogram, ClusterError> {
    let n = dist.len();
    if n < 2 {
        return Err(ClusterError::TooFewItems { needed: 2, found: n });
    }
    Ok(Dendrogram {
        n,
        merges: relabel(n, nn_chain(dist)),
    })
}

pub fn ward_cluster(space: &EmbeddingSpace) -> Result<Dendrogram, ClusterError> {
    ward_cluster_with(space.into(), WardStorage::Auto, Execution::default())
}

pub fn ward_cluster_with(
    points: Points<'_>,
    storage: WardStorage,
    exec: Execution,
) -> Result<Dendrogram, ClusterError> {
    let n = points.len();
    if n < 2 {
        return Err(ClusterError::TooFewItems { needed: 2, found: n });
    }
    match storage.resolve(n) {
        WardStorage::CondensedF64 => {
            ward_from_distances(CondensedDistances::<f64>::from_points(points, exec))
        }
        WardStorage::CondensedF32 => {
            ward_from_distances(CondensedDistances::<f32>::from_points(points, exec))
        }
        _ => Ok(Dendrogram {
            n,
            merges: relabel(n, nn_chain(Centroids::new(points))),
        }),
    }
}

/// A complete binary merge tree over `n` leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    /// Validates node numbering, sizes and height order.
    pub fn new(n: usize, merges: Vec<Merge>) -> Result<Self, ClusterError> {
        let bad = |m: String| Err(ClusterError::InvalidDendrogram(m));
        if n < 1 || merges.len() != n - 1 {
            return bad(format!("{} merges for {n} leaves", merges.len()));
        }
        let mut size = vec![1usize; 2 * n - 1];
        let mut used = vec![false; 2 * n - 1];
        for (k, m) in merges.iter().enumerate() {
            let node = n + k;
            for c in [m.left, m.right] {
                if c >= node || used[c] {
                    return bad(format!("merge {k} reuses or forward-references node {c}"));
                }
                used[c] = true;
            }
            if m.left == m.right || !(m.height >= 0.0) {
                return bad(format!("merge {k} is malformed"));
            }
            if k > 0 && m.height < merges[k - 1].height {
                return bad(format!("merge {k} height decreases"));
            }
            size[node] = size[m.left] + size[m.right];
            if m.size != size[node] {
                return bad(format!("merge {k} size {} != {}", m.size, size[node]));
            }
        }
        Ok(Dendrogram { n, merges })
    }

    pub fn leaves(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        (node >= self.n)
            .then(|| self.merges.get(node - self.n))
            .flatten()
            .map(|m| (m.left, m.right))
    }

    /// Leaves under `node`, ascending.
    pub fn members(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            match self.children(x) {
                Some((l, r)) => stack.extend([l, r]),
                None => out.push(x),
            }
        }
        out.sort_unstable();
        out
    }

    /// Cluster label per leaf after undoing the last `k − 1` merges. Clusters
    /// are numbered in order of their smallest leaf.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>, ClusterError> {
        let n = self.n;
        if k < 1 || k > n {
            return Err(ClusterError::InvalidK { k, n });
        }
        let roots = self.cut_roots(k);
        let mut labels = vec![usize::MAX; n];
        let mut next = 0;
        for leaf in 0..n {
            if labels[leaf] == usize::MAX {
                let root = roots[leaf];
                for m in self.members(root) {
                    labels[m] = next;
                }
                next += 1;
            }
        }
        Ok(labels)
    }

    /// Root node of each leaf's cluster in the k-cut.
    pub(crate) fn cut_roots(&self, k: usize) -> Vec<usize> {
        let n = self.n;
        let mut parent: Vec<usize> = (0..2 * n - 1).collect();
        for (i, m) in self.merges[..n - k].iter().enumerate() {
            parent[m.left] = n + i;
            parent[m.right] = n + i;
        }
        (0..n)
            .map(|mut x| {
                while parent[x] != x {
                    x = parent[x];
                }
                x
            })
            .collect()
    }
}
