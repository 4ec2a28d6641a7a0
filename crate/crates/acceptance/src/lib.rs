//! Reference implementations the acceptance suite checks the engine against.
//!
//! Each oracle takes the most direct route from the definition, with no
//! blocking, screening or incremental updates, so agreement with the
//! optimized code is meaningful.

use std::collections::BTreeSet;

use capsight_core::EmbeddingSpace;

/// Top-`n` ids for row `seed`: f64 cosine for every other row, full sort by
/// score descending then id ascending.
pub fn brute_force_top_n(space: &EmbeddingSpace, seed: usize, n: usize) -> Vec<String> {
    let q = space.row(seed);
    let qn = norm(q);
    let mut all: Vec<(f64, &str)> = (0..space.len())
        .filter(|&j| j != seed)
        .map(|j| {
            let v = space.row(j);
            let dot: f64 = q.iter().zip(v).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
            ((dot / (qn * norm(v))).clamp(-1.0, 1.0), space.ids()[j].as_str())
        })
        .collect();
    // Numeric comparison, so a cosine of -0.0 ties with 0.0.
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    all.into_iter().take(n).map(|(_, id)| id.to_string()).collect()
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt()
}

/// Exhaustive Ward agglomeration. Every step recomputes all centroids and
/// evaluates `2|A||B|/(|A|+|B|) ‖c_A − c_B‖²` for every pair, merging the
/// minimum. Returns the member set and height of each merge.
pub fn exhaustive_ward(points: &[Vec<f64>]) -> Vec<(BTreeSet<usize>, f64)> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let dim = points.first().map_or(0, Vec::len);
    let centroid = |c: &[usize]| -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &i in c {
            for (o, p) in out.iter_mut().zip(&points[i]) {
                *o += p;
            }
        }
        out.iter().map(|v| v / c.len() as f64).collect()
    };
    let mut merges = Vec::with_capacity(points.len().saturating_sub(1));
    while clusters.len() > 1 {
        let cents: Vec<Vec<f64>> = clusters.iter().map(|c| centroid(c)).collect();
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let sq: f64 = cents[a].iter().zip(&cents[b]).map(|(x, y)| (x - y).powi(2)).sum();
                let (na, nb) = (clusters[a].len() as f64, clusters[b].len() as f64);
                let d = 2.0 * na * nb / (na + nb) * sq;
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (d, a, b) = best;
        let merged: Vec<usize> = clusters[a].iter().chain(&clusters[b]).copied().collect();
        merges.push((merged.iter().copied().collect(), d));
        clusters.remove(b);
        clusters[a] = merged;
    }
    merges
}

/// Merge sequences are equivalent when they agree up to reordering inside runs
/// of tied heights (relative tolerance `1e-9`).
pub fn ward_equivalent(got: &[(BTreeSet<usize>, f64)], want: &[(BTreeSet<usize>, f64)]) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{} merges, oracle has {}", got.len(), want.len()));
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12);
    let mut i = 0;
    while i < want.len() {
        let mut j = i + 1;
        while j < want.len() && close(want[j].1, want[i].1) {
            j += 1;
        }
        let g: BTreeSet<&BTreeSet<usize>> = got[i..j].iter().map(|x| &x.0).collect();
        let w: BTreeSet<&BTreeSet<usize>> = want[i..j].iter().map(|x| &x.0).collect();
        if g != w {
            return Err(format!("merge run {i}..{j} differs"));
        }
        for k in i..j {
            if !close(got[k].1, want[k].1) {
                return Err(format!("height {k}: {} vs {}", got[k].1, want[k].1));
            }
        }
        i = j;
    }
    Ok(())
}

/// G² from the expanded log form
/// `2[a ln a + b ln b − (a+b) ln(a+b) + (a+b) ln(c+d) − a ln c − b ln d]`,
/// algebraically equal to `2[a ln(a/E1) + b ln(b/E2)]` but computed without
/// forming the expected counts.
pub fn g2_expanded(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let xlx = |x: f64| if x == 0.0 { 0.0 } else { x * x.ln() };
    let (a, b, c, d) = (a as f64, b as f64, c as f64, d as f64);
    let ln = |x: f64| x.ln();
    2.0 * (xlx(a) + xlx(b) - xlx(a + b) + (a + b) * ln(c + d) - if a > 0.0 { a * ln(c) } else { 0.0 }
        - if b > 0.0 { b * ln(d) } else { 0.0 })
}

/// Peak resident set size of this process in bytes (`VmHWM`), Linux only.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g2_worked_values() {
        assert!(g2_expanded(1, 100, 10, 1000).abs() < 1e-12);
        assert!((g2_expanded(10, 10, 100, 1000) - 22.138_221_829_656).abs() < 1e-9);
    }

    #[test]
    fn exhaustive_ward_on_a_line() {
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 5.0].iter().map(|&x| vec![x]).collect();
        let m = exhaustive_ward(&pts);
        assert_eq!(m[0].0, BTreeSet::from([0, 1]));
        assert!((m[0].1 - 1.0).abs() < 1e-12);
        // centroids 0.5 and 5: 2·2·1/3·20.25 = 27
        assert!((m[1].1 - 27.0).abs() < 1e-12);
    }

    #[test]
    fn brute_force_ties_by_id() {
        let mut s = EmbeddingSpace::new("t", 2).unwrap();
        s.push("c", &[1.0, 0.0]).unwrap();
        s.push("b", &[0.0, 1.0]).unwrap();
        s.push("a", &[0.0, -1.0]).unwrap();
        assert_eq!(brute_force_top_n(&s, 0, 2), ["a", "b"]);
    }
}
