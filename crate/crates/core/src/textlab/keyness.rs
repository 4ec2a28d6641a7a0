//! Dunning log-likelihood (G²) keyness.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TextlabError;

/// Counts for one term: `a` in the target corpus of `c` tokens, `b` in the
/// reference corpus of `d` tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContingencyTable {
    a: u64,
    b: u64,
    c: u64,
    d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Result<Self, TextlabError> {
        if c == 0 {
            return Err(TextlabError::EmptyTarget);
        }
        if d == 0 {
            return Err(TextlabError::EmptyReference);
        }
        if a > c || b > d {
            return Err(TextlabError::InvalidTable { a, b, c, d });
        }
        Ok(ContingencyTable { a, b, c, d })
    }

    pub fn a(&self) -> u64 {
        self.a
    }
    pub fn b(&self) -> u64 {
        self.b
    }
    pub fn c(&self) -> u64 {
        self.c
    }
    pub fn d(&self) -> u64 {
        self.d
    }

    /// Expected target count `c(a+b)/(c+d)`.
    pub fn expected_target(&self) -> f64 {
        self.c as f64 * (self.a + self.b) as f64 / (self.c + self.d) as f64
    }

    /// Expected reference count `d(a+b)/(c+d)`.
    pub fn expected_reference(&self) -> f64 {
        self.d as f64 * (self.a + self.b) as f64 / (self.c + self.d) as f64
    }

    /// `a/c > b/d`, compared exactly in integers.
    pub fn overrepresented_in_target(&self) -> bool {
        u128::from(self.a) * u128::from(self.d) > u128::from(self.b) * u128::from(self.c)
    }

    /// `2 [a ln(a/E1) + b ln(b/E2)]` with `0 ln 0 = 0`.
    pub fn g2(&self) -> f64 {
        fn term(observed: u64, expected: f64) -> f64 {
            if observed == 0 {
                0.0
            } else {
                let o = observed as f64;
                o * (o / expected).ln()
            }
        }
        let g = 2.0 * (term(self.a, self.expected_target()) + term(self.b, self.expected_reference()));
        // Rounding can leave a tiny negative residue when a/c == b/d.
        g.max(0.0)
    }
}

pub fn g2(table: &ContingencyTable) -> f64 {
    table.g2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeynessScore {
    pub term: String,
    pub g2: f64,
    pub overrepresented_in_target: bool,
}

/// Terms most overrepresented in `target` relative to `reference`.
///
/// Only terms with a target count of at least `min_target_count` are scored;
/// only overrepresented terms are kept; order is G² descending then lemma
/// ascending; at most `k` are returned.
pub fn keyness_rank(
    target: &HashMap<String, u64>,
    reference: &HashMap<String, u64>,
    min_target_count: u64,
    k: usize,
) -> Result<Vec<KeynessScore>, TextlabError> {
    let c: u64 = target.values().sum();
    let d: u64 = reference.values().sum();
    if c == 0 {
        return Err(TextlabError::EmptyTarget);
    }
    if d == 0 {
        return Err(TextlabError::EmptyReference);
    }
    let mut scores = Vec::new();
    for (term, &a) in target {
        if a < min_target_count.max(1) {
            continue;
        }
        let b = reference.get(term).copied().unwrap_or(0);
        let table = ContingencyTable::new(a, b, c, d)?;
        if !table.overrepresented_in_target() {
            continue;
        }
        scores.push(KeynessScore {
            term: term.clone(),
            g2: table.g2(),
            overrepresented_in_target: true,
        });
    }
    scores.sort_by(|x, y| {
        y.g2.partial_cmp(&x.g2)
            .unwrap_or(Ordering::Equal)
            .then_with(|| x.term.cmp(&y.term))
    });
    scores.truncate(k);
    Ok(scores)
}
