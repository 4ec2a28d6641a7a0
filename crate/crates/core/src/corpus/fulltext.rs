//! BM25 inverted index over caption text.
//!
//! Terms are lowercased surface words from [`crate::textlab::words`]; no
//! stemming or lemmatization is applied here.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use super::record::Caption;
use super::CorpusError;
use crate::textlab::words;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    /// Dense document number, see [`FulltextIndex::doc_id`].
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchHit {
    pub image_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FulltextIndex {
    params: Bm25Params,
    postings: HashMap<String, Vec<Posting>>,
    doc_ids: Vec<String>,
    doc_len: Vec<u32>,
    total_len: u64,
}

impl FulltextIndex {
    pub fn build<'a>(captions: impl IntoIterator<Item = &'a Caption>) -> Self {
        Self::build_with(captions, Bm25Params::default())
    }

    pub fn build_with<'a>(
        captions: impl IntoIterator<Item = &'a Caption>,
        params: Bm25Params,
    ) -> Self {
        let mut index = FulltextIndex {
            params,
            ..Default::default()
        };
        for caption in captions {
            let doc = index.doc_ids.len() as u32;
            let mut tf: HashMap<String, u32> = HashMap::new();
            let mut len = 0u32;
            for w in words(&caption.text) {
                *tf.entry(w.to_lowercase()).or_default() += 1;
                len += 1;
            }
            for (term, count) in tf {
                index
                    .postings
                    .entry(term)
                    .or_default()
                    .push(Posting { doc, tf: count });
            }
            index.doc_ids.push(caption.image_id.clone());
            index.doc_len.push(len);
            index.total_len += u64::from(len);
        }
        index
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn doc_id(&self, doc: u32) -> &str {
        &self.doc_ids[doc as usize]
    }

    pub fn doc_len(&self, doc: u32) -> u32 {
        self.doc_len[doc as usize]
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.doc_ids.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.doc_ids.len() as f64
        }
    }

    /// Non-negative BM25 idf: `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = self.postings(term).len() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Ranked hits for `query`: BM25 descending, ties by ascending image id.
    ///
    /// Repeated query terms count once. Only documents matching at least one
    /// term are returned.
    pub fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, CorpusError> {
        let terms: BTreeSet<String> = words(query).map(str::to_lowercase).collect();
        if terms.is_empty() {
            return Err(CorpusError::EmptyQuery);
        }
        let Bm25Params { k1, b } = self.params;
        let avgdl = self.avg_doc_len().max(f64::MIN_POSITIVE);
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            for p in postings {
                let tf = f64::from(p.tf);
                let dl = f64::from(self.doc_len(p.doc));
                let s = idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
                *scores.entry(p.doc).or_default() += s;
            }
        }
        let mut hits: Vec<SearchHit> = scores
            .into_iter()
            .map(|(doc, score)| SearchHit {
                image_id: self.doc_id(doc).to_string(),
                score,
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.image_id.cmp(&b.image_id))
        });
        hits.truncate(limit);
        Ok(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(id: &str, text: &str) -> Caption {
        Caption::new(id, text, 0, "m", "p")
    }

    #[test]
    fn empty_index() {
        let idx = FulltextIndex::build(std::iter::empty());
        assert!(idx.is_empty());
        assert_eq!(idx.num_terms(), 0);
        assert!(idx.search("dairy", 5).unwrap().is_empty());
    }

    #[test]
    fn posting_counts() {
        let caps = [cap("1", "a b"), cap("2", "b c")];
        let idx = FulltextIndex::build(&caps);
        assert_eq!(idx.postings("b").len(), 2);
        assert_eq!(idx.postings("a").len(), 1);
        assert_eq!(idx.postings("z").len(), 0);
    }

    #[test]
    fn absent_term_and_empty_query() {
        let caps = [cap("1", "a b")];
        let idx = FulltextIndex::build(&caps);
        assert!(idx.search("zebra", 10).unwrap().is_empty());
        assert!(matches!(idx.search("  ,.; ", 10), Err(CorpusError::EmptyQuery)));
    }

    #[test]
    fn both_terms_beat_one_term_by_hand_bm25() {
        // A: "wooden picnic table here", B: "wooden picnic bench here", C: "gravel path trees here"
        let caps = [
            cap("A", "wooden picnic table here"),
            cap("B", "wooden picnic bench here"),
            cap("C", "gravel path trees here"),
        ];
        let idx = FulltextIndex::build(&caps);
        let hits = idx.search("picnic table", 10).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].image_id, "A");
        assert_eq!(hits[1].image_id, "B");

        // Hand computation: N=3, all docs length 4 = avgdl, so the length norm is 1
        // and each tf=1 term contributes idf * 2.2 / 2.2 = idf.
        let idf_picnic = (1.0f64 + (3.0 - 2.0 + 0.5) / 2.5).ln();
        let idf_table = (1.0f64 + (3.0 - 1.0 + 0.5) / 1.5).ln();
        assert!((hits[0].score - (idf_picnic + idf_table)).abs() < 1e-12);
        assert!((hits[1].score - idf_picnic).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_id_and_limit_applies() {
        let caps = [cap("b", "snow"), cap("a", "snow"), cap("c", "snow")];
        let idx = FulltextIndex::build(&caps);
        let hits = idx.search("SNOW", 2).unwrap();
        assert_eq!(
            hits.iter().map(|h| h.image_id.as_str()).collect::<Vec<_>>(),
            ["a", "b"]
        );
    }
}
