//! Symmetry and cross-space overlap of top-N recommendations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::index::{CosineIndex, Neighbor};
use super::SimilarityError;
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryEntry {
    pub n: usize,
    pub reciprocated_count: u64,
    pub total_directed_count: u64,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub space: String,
    pub corpus_size: usize,
    pub entries: Vec<SymmetryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapEntry {
    pub n: usize,
    pub mean_overlap: f64,
    pub proportion_zero_overlap: f64,
    pub proportion_overlap_at_most_one: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub space_a: String,
    pub space_b: String,
    pub corpus_size: usize,
    pub entries: Vec<OverlapEntry>,
}

fn sorted_n_values(n_values: &[usize]) -> Result<Vec<usize>, SimilarityError> {
    if n_values.is_empty() {
        return Err(SimilarityError::EmptyNValues);
    }
    if n_values.contains(&0) {
        return Err(SimilarityError::InvalidN);
    }
    let mut ns = n_values.to_vec();
    ns.sort_unstable();
    ns.dedup();
    Ok(ns)
}

fn rank_of(list: &[Neighbor], index: usize) -> Option<usize> {
    list.iter().position(|nb| nb.index == index)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Symmetry entries from precomputed neighbor lists (row order, each at least
/// `max(n_values)` long or `len − 1`).
pub fn symmetry_from_neighbors(lists: &[Vec<Neighbor>], n_values: &[usize]) -> Vec<SymmetryEntry> {
    let rows = lists.len();
    let max_n = n_values.iter().copied().max().unwrap_or(0);
    // hist[m]: directed edges reciprocated from n = m + 1 onwards
    let mut hist = vec![0u64; max_n];
    for (i, list) in lists.iter().enumerate() {
        for (r, nb) in list.iter().enumerate().take(max_n) {
            if let Some(back) = rank_of(&lists[nb.index][..lists[nb.index].len().min(max_n)], i) {
                hist[r.max(back)] += 1;
            }
        }
    }
    n_values
        .iter()
        .map(|&n| {
            let reciprocated: u64 = hist[..n].iter().sum();
            let total = (rows * n.min(rows.saturating_sub(1))) as u64;
            SymmetryEntry {
                n,
                reciprocated_count: reciprocated,
                total_directed_count: total,
                proportion: ratio(reciprocated, total),
            }
        })
        .collect()
}

pub fn symmetry_metric(
    index: &CosineIndex,
    n_values: &[usize],
    exec: Execution,
) -> Result<SymmetryReport, SimilarityError> {
    let ns = sorted_n_values(n_values)?;
    if index.is_empty() {
        return Err(SimilarityError::EmptySpace(index.space().name().to_string()));
    }
    let lists = index.top_n_all(*ns.last().unwrap(), exec);
    Ok(SymmetryReport {
        space: index.space().name().to_string(),
        corpus_size: index.len(),
        entries: symmetry_from_neighbors(&lists, &ns),
    })
}

/// Overlap entries from neighbor lists of the same images in two spaces.
/// `lists_b` must already be expressed in `lists_a`'s row numbering.
pub fn overlap_from_neighbors(
    lists_a: &[Vec<Neighbor>],
    lists_b: &[Vec<Neighbor>],
    n_values: &[usize],
) -> Vec<OverlapEntry> {
    let rows = lists_a.len();
    let max_n = n_values.iter().copied().max().unwrap_or(0);
    let mut sum = vec![0u64; n_values.len()];
    let mut zero = vec![0u64; n_values.len()];
    let mut at_most_one = vec![0u64; n_values.len()];
    let mut hist = vec![0u64; max_n];
    for (la, lb) in lists_a.iter().zip(lists_b) {
        hist.iter_mut().for_each(|h| *h = 0);
        let lb = &lb[..lb.len().min(max_n)];
        for (ra, nb) in la.iter().enumerate().take(max_n) {
            if let Some(rb) = rank_of(lb, nb.index) {
                hist[ra.max(rb)] += 1;
            }
        }
        for (k, &n) in n_values.iter().enumerate() {
            let overlap: u64 = hist[..n].iter().sum();
            sum[k] += overlap;
            zero[k] += u64::from(overlap == 0);
            at_most_one[k] += u64::from(overlap <= 1);
        }
    }
    n_values
        .iter()
        .enumerate()
        .map(|(k, &n)| OverlapEntry {
            n,
            mean_overlap: ratio(sum[k], rows as u64),
            proportion_zero_overlap: ratio(zero[k], rows as u64),
            proportion_overlap_at_most_one: ratio(at_most_one[k], rows as u64),
        })
        .collect()
}

pub fn overlap_metric(
    a: &CosineIndex,
    b: &CosineIndex,
    n_values: &[usize],
    exec: Execution,
) -> Result<OverlapReport, SimilarityError> {
    let ns = sorted_n_values(n_values)?;
    let missing = |from: &CosineIndex, to: &CosineIndex| -> Vec<String> {
        from.space()
            .ids()
            .iter()
            .filter(|id| !to.space().contains(id))
            .cloned()
            .collect()
    };
    let missing_in_a = missing(b, a);
    let missing_in_b = missing(a, b);
    if !missing_in_a.is_empty() || !missing_in_b.is_empty() {
        return Err(SimilarityError::CoverageMismatch {
            space_a: a.space().name().to_string(),
            space_b: b.space().name().to_string(),
            missing_in_a,
            missing_in_b,
        });
    }
    if a.is_empty() {
        return Err(SimilarityError::EmptySpace(a.space().name().to_string()));
    }
    let max_n = *ns.last().unwrap();
    let lists_a = a.top_n_all(max_n, exec);
    let raw_b = b.top_n_all(max_n, exec);
    let to_a: Vec<usize> = b
        .space()
        .ids()
        .iter()
        .map(|id| a.space().position(id).expect("coverage checked"))
        .collect();
    let mut lists_b = vec![Vec::new(); a.len()];
    for (j, list) in raw_b.into_iter().enumerate() {
        lists_b[to_a[j]] = list
            .into_iter()
            .map(|nb| Neighbor {
                index: to_a[nb.index],
                score: nb.score,
            })
            .collect();
    }
    Ok(OverlapReport {
        space_a: a.space().name().to_string(),
        space_b: b.space().name().to_string(),
        corpus_size: a.len(),
        entries: overlap_from_neighbors(&lists_a, &lists_b, &ns),
    })
}

fn percent(p: f64) -> String {
    format!("{:.1}%", p * 100.0)
}

fn render(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// One row per space, one column per n; percentages to one decimal.
pub fn symmetry_table(reports: &[SymmetryReport]) -> String {
    let mut ns: Vec<usize> = reports
        .iter()
        .flat_map(|r| r.entries.iter().map(|e| e.n))
        .collect();
    ns.sort_unstable();
    ns.dedup();
    let mut rows = vec![std::iter::once("Num. Recommendations:".to_string())
        .chain(ns.iter().map(usize::to_string))
        .collect::<Vec<_>>()];
    for r in reports {
        let mut row = vec![r.space.clone()];
        for n in &ns {
            row.push(
                r.entries
                    .iter()
                    .find(|e| e.n == *n)
                    .map_or_else(|| "-".to_string(), |e| percent(e.proportion)),
            );
        }
        rows.push(row);
    }
    render(&rows)
}

impl OverlapReport {
    pub fn to_table(&self) -> String {
        let mut rows = vec![vec![
            "Num. Recommendations".to_string(),
            "Avg. Overlap".to_string(),
            "No-Overlap".to_string(),
            "Overlap ≤ 1".to_string(),
        ]];
        for e in &self.entries {
            rows.push(vec![
                e.n.to_string(),
                format!("{:.2}", e.mean_overlap),
                percent(e.proportion_zero_overlap),
                percent(e.proportion_overlap_at_most_one),
            ]);
        }
        render(&rows)
    }
}

impl SymmetryReport {
    pub fn to_table(&self) -> String {
        symmetry_table(std::slice::from_ref(self))
    }
}
