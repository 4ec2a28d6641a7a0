//! K-cut assignments, dendrogram-consistent ordering and keyness labels.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::distances::Points;
use super::ward::{ward_cluster_with, Dendrogram, WardStorage};
use super::ClusterError;
use crate::exec::Execution;
use crate::textlab::{keyness_rank, CaptionTerms, TextlabError};

pub const DEFAULT_K: usize = 32;
pub const LABEL_TERMS: usize = 6;
pub const LABEL_MIN_TARGET_COUNT: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub terms: Vec<String>,
    pub order_position: usize,
}

/// A partition of one embedding space's images into `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub space_name: String,
    /// Image ids in embedding-space row order.
    pub ids: Vec<String>,
    /// Cluster id per entry of `ids`.
    pub labels: Vec<usize>,
    pub summaries: Vec<ClusterSummary>,
}

impl ClusterAssignment {
    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id).map(|i| self.labels[i])
    }

    pub fn members(&self, cluster: usize) -> Vec<&str> {
        self.ids
            .iter()
            .zip(&self.labels)
            .filter(|(_, &c)| c == cluster)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn assignment_map(&self) -> BTreeMap<&str, usize> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.labels.iter().copied())
            .collect()
    }

    /// Summaries sorted by `order_position`.
    pub fn ordered(&self) -> Vec<&ClusterSummary> {
        let mut v: Vec<&ClusterSummary> = self.summaries.iter().collect();
        v.sort_by_key(|s| s.order_position);
        v
    }

    /// Checks the partition and summary invariants.
    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: String| Err(ClusterError::Mismatch(m));
        if self.ids.len() != self.labels.len() {
            return bad("ids and labels differ in length".into());
        }
        if self.summaries.len() != self.k {
            return bad(format!("{} summaries for k = {}", self.summaries.len(), self.k));
        }
        let mut sizes = vec![0usize; self.k];
        for &c in &self.labels {
            if c >= self.k {
                return bad(format!("label {c} out of range"));
            }
            sizes[c] += 1;
        }
        let mut positions = vec![false; self.k];
        for (c, s) in self.summaries.iter().enumerate() {
            if s.cluster != c || s.size != sizes[c] || s.size == 0 {
                return bad(format!("summary {c} disagrees with labels"));
            }
            if s.order_position >= self.k || positions[s.order_position] {
                return bad("order positions are not a permutation".into());
            }
            positions[s.order_position] = true;
        }
        Ok(())
    }

    /// Plain-text table: ID (row number), six-term description, photo count.
    pub fn to_table(&self) -> String {
        let rows: Vec<(String, String, String)> = self
            .ordered()
            .into_iter()
            .map(|s| {
                (
                    (s.order_position + 1).to_string(),
                    s.terms.join("; "),
                    s.size.to_string(),
                )
            })
            .collect();
        let head = ("ID", "Cluster Description", "Num. Photos");
        let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(head.0.len());
        let w1 = rows
            .iter()
            .map(|r| r.1.chars().count())
            .max()
            .unwrap_or(0)
            .max(head.1.len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<w0$}  {:<w1$}  {}", head.0, head.1, head.2);
        for (a, b, c) in rows {
            let _ = writeln!(out, "{a:<w0$}  {b:<w1$}  {c:>11}");
        }
        out
    }
}

/// Cuts the dendrogram of `ids` into `k` clusters; labels unfilled, order by cluster id.
pub fn cut(
    dendrogram: &Dendrogram,
    k: usize,
    ids: &[String],
    space_name: &str,
) -> Result<ClusterAssignment, ClusterError> {
    if ids.len() != dendrogram.leaves() {
        return Err(ClusterError::Mismatch(format!(
            "{} ids for {} leaves",
            ids.len(),
            dendrogram.leaves()
        )));
    }
    let labels = dendrogram.cut(k)?;
    let mut sizes = vec![0usize; k];
    for &c in &labels {
        sizes[c] += 1;
    }
    Ok(ClusterAssignment {
        k,
        space_name: space_name.to_string(),
        ids: ids.to_vec(),
        labels,
        summaries: sizes
            .into_iter()
            .enumerate()
            .map(|(c, size)| ClusterSummary {
                cluster: c,
                size,
                terms: Vec::new(),
                order_position: c,
            })
            .collect(),
    })
}

struct NodeInfo {
    sum: Vec<f64>,
    count: usize,
    min_cluster: usize,
}

impl NodeInfo {
    fn centroid(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.count as f64).collect()
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Left-to-right order of the k clusters, as `order_position` per cluster id.
///
/// Walks the top `k − 1` merges from the root. At each node the two
/// children are placed so that the centroid of the child touching the left
/// neighbor (and the one touching the right neighbor) is as close as
/// possible to that neighbor's centroid; equal costs put the subtree holding
/// the smaller cluster id first.
pub fn order_clusters(
    dendrogram: &Dendrogram,
    assignment: &ClusterAssignment,
    points: Points<'_>,
) -> Result<Vec<usize>, ClusterError> {
    let n = dendrogram.leaves();
    let k = assignment.k;
    if points.len() != n || assignment.ids.len() != n {
        return Err(ClusterError::Mismatch(
            "assignment, dendrogram and space cover different items".into(),
        ));
    }
    if dendrogram.cut(k)? != assignment.labels {
        return Err(ClusterError::Mismatch(format!(
            "assignment is not the {k}-cut of this dendrogram"
        )));
    }
    let roots = dendrogram.cut_roots(k);
    let dim = points.dim();
    let mut info: HashMap<usize, NodeInfo> = HashMap::new();
    for (leaf, &root) in roots.iter().enumerate() {
        let e = info.entry(root).or_insert_with(|| NodeInfo {
            sum: vec![0.0; dim],
            count: 0,
            min_cluster: assignment.labels[leaf],
        });
        for (s, &v) in e.sum.iter_mut().zip(points.row(leaf)) {
            *s += v as f64;
        }
        e.count += 1;
    }
    for (i, m) in dendrogram.merges().iter().enumerate().skip(n - k) {
        let (l, r) = (&info[&m.left], &info[&m.right]);
        let node = NodeInfo {
            sum: l.sum.iter().zip(&r.sum).map(|(a, b)| a + b).collect(),
            count: l.count + r.count,
            min_cluster: l.min_cluster.min(r.min_cluster),
        };
        info.insert(n + i, node);
    }
    let top = if k == 1 { roots[0] } else { 2 * n - 2 };
    let centroids: HashMap<usize, Vec<f64>> =
        info.iter().map(|(&node, i)| (node, i.centroid())).collect();
    let cost = |ctx: Option<usize>, node: usize| ctx.map_or(0.0, |c| sq(&centroids[&c], &centroids[&node]));

    let mut sequence = Vec::with_capacity(k);
    let mut stack: Vec<(usize, Option<usize>, Option<usize>)> = vec![(top, None, None)];
    while let Some((node, left_ctx, right_ctx)) = stack.pop() {
        let children = if node >= n && node - n >= n - k {
            dendrogram.children(node)
        } else {
            None
        };
        let Some((a, b)) = children else {
            sequence.push(info[&node].min_cluster);
            continue;
        };
        let ab = cost(left_ctx, a) + cost(right_ctx, b);
        let ba = cost(left_ctx, b) + cost(right_ctx, a);
        let a_first = match ab.total_cmp(&ba) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => info[&a].min_cluster < info[&b].min_cluster,
        };
        let (first, second) = if a_first { (a, b) } else { (b, a) };
        stack.push((second, Some(first), right_ctx));
        stack.push((first, left_ctx, Some(second)));
    }
    let mut position = vec![0; k];
    for (p, &c) in sequence.iter().enumerate() {
        position[c] = p;
    }
    Ok(position)
}

/// Fills each summary's terms with the clusters' most distinctive noun lemmas.
pub fn label_clusters(
    assignment: &mut ClusterAssignment,
    terms: &CaptionTerms,
    k_terms: usize,
) -> Result<(), ClusterError> {
    let mut per_cluster: Vec<HashMap<String, u64>> = vec![HashMap::new(); assignment.k];
    let mut all: HashMap<String, u64> = HashMap::new();
    for (id, &c) in assignment.ids.iter().zip(&assignment.labels) {
        let counts = terms
            .counts(id)
            .ok_or_else(|| TextlabError::MissingCaption(id.clone()))?;
        for (t, &n) in counts {
            *per_cluster[c].entry(t.clone()).or_insert(0) += n;
            *all.entry(t.clone()).or_insert(0) += n;
        }
    }
    for (c, target) in per_cluster.iter().enumerate() {
        let reference: HashMap<String, u64> = all
            .iter()
            .filter_map(|(t, &n)| {
                let rest = n - target.get(t).copied().unwrap_or(0);
                (rest > 0).then(|| (t.clone(), rest))
            })
            .collect();
        let ranked = keyness_rank(target, &reference, LABEL_MIN_TARGET_COUNT, k_terms)?;
        assignment.summaries[c].terms = ranked.into_iter().map(|s| s.term).collect();
    }
    Ok(())
}

/// Ward clustering, `k`-cut, ordering and labels in one step.
pub fn cluster_and_label(
    points: Points<'_>,
    ids: &[String],
    space_name: &str,
    k: usize,
    terms: &CaptionTerms,
    storage: WardStorage,
    exec: Execution,
) -> Result<ClusterAssignment, ClusterError> {
    let dendrogram = ward_cluster_with(points, storage, exec)?;
    let mut assignment = cut(&dendrogram, k, ids, space_name)?;
    let positions = order_clusters(&dendrogram, &assignment, points)?;
    for (s, p) in assignment.summaries.iter_mut().zip(positions) {
        s.order_position = p;
    }
    label_clusters(&mut assignment, terms, LABEL_TERMS)?;
    Ok(assignment)
}
