//! Immutable, versioned view of everything the engine serves.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::{
    Bm25Params, Caption, CorpusError, EmbeddingSpace, FulltextIndex, ImageRecord, ManifestEntry,
    SearchHit, Status,
};
use crate::cluster::{ClusterAssignment, Projection2D};
use crate::similarity::{
    CosineIndex, OverlapReport, RecommendationSet, SimilarityError, SymmetryReport,
};
use crate::textlab::{
    caption_stats, label_recommendation_set, CaptionStats, CaptionTerms, HedgeLexicon,
    RuleTagger, Tagger, TextlabError, SET_TERMS,
};

pub const CAPTION_SPACE: &str = "caption";
pub const VISUAL_SPACE: &str = "visual";

/// Symmetry and overlap results kept alongside a snapshot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReports {
    #[serde(default)]
    pub symmetry: Vec<SymmetryReport>,
    #[serde(default)]
    pub overlap: Vec<OverlapReport>,
}

impl EvaluationReports {
    pub fn is_empty(&self) -> bool {
        self.symmetry.is_empty() && self.overlap.is_empty()
    }
}

pub struct CorpusSnapshot {
    version: u64,
    entries: Vec<ManifestEntry>,
    index: HashMap<String, usize>,
    spaces: BTreeMap<String, Arc<EmbeddingSpace>>,
    cosine: BTreeMap<String, OnceLock<Arc<CosineIndex>>>,
    fulltext: FulltextIndex,
    tagger: Arc<dyn Tagger>,
    terms: OnceLock<CaptionTerms>,
    clusters: Option<ClusterAssignment>,
    projection: Option<Projection2D>,
    reports: EvaluationReports,
}

impl std::fmt::Debug for CorpusSnapshot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CorpusSnapshot")
            .field("version", &self.version)
            .field("images", &self.entries.len())
            .field("spaces", &self.spaces.keys().collect::<Vec<_>>())
            .field("clusters", &self.clusters.as_ref().map(|c| c.k))
            .finish()
    }
}

impl CorpusSnapshot {
    pub fn builder(version: u64) -> SnapshotBuilder {
        SnapshotBuilder::new(version)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn record(&self, id: &str) -> Option<&ImageRecord> {
        self.entry(id).map(|e| &e.record)
    }

    pub fn caption(&self, id: &str) -> Option<&Caption> {
        self.entry(id).and_then(|e| e.caption.as_ref())
    }

    pub fn captions(&self) -> impl Iterator<Item = &Caption> {
        self.entries.iter().filter_map(|e| e.caption.as_ref())
    }

    pub fn space_names(&self) -> impl Iterator<Item = &str> {
        self.spaces.keys().map(String::as_str)
    }

    pub fn space(&self, name: &str) -> Option<&Arc<EmbeddingSpace>> {
        self.spaces.get(name)
    }

    /// Exact-search index over a space, built on first use.
    pub fn cosine_index(&self, space: &str) -> Result<&Arc<CosineIndex>, SimilarityError> {
        let cell = self
            .cosine
            .get(space)
            .ok_or_else(|| SimilarityError::UnknownSpace(space.to_string()))?;
        Ok(cell.get_or_init(|| Arc::new(CosineIndex::new(self.spaces[space].clone()))))
    }

    /// Exact top-n neighbors of `seed` in `space`.
    pub fn top_n(&self, seed: &str, n: usize, space: &str) -> Result<RecommendationSet, SimilarityError> {
        let index = self.cosine_index(space)?;
        match index.recommend(seed, n) {
            Err(SimilarityError::UnknownSeed(id)) if self.record(&id).is_some() => {
                Err(SimilarityError::NoVector {
                    id,
                    space: space.to_string(),
                })
            }
            other => other,
        }
    }

    /// [`top_n`](Self::top_n) with keyness explanation terms attached.
    ///
    /// Terms are `None` when the set has no keyness ranking, for instance
    /// when it covers every caption or the seed has none.
    pub fn recommend(&self, seed: &str, n: usize, space: &str) -> Result<RecommendationSet, SimilarityError> {
        let mut rec = self.top_n(seed, n, space)?;
        rec.explanation_terms = self.explanation_terms(&rec, SET_TERMS).ok();
        Ok(rec)
    }

    /// Noun-lemma counts of every caption, built on first use.
    pub fn caption_terms(&self) -> &CaptionTerms {
        self.terms.get_or_init(|| {
            CaptionTerms::build(
                self.captions().map(|c| (c.image_id.as_str(), c.text.as_str())),
                self.tagger.as_ref(),
            )
        })
    }

    /// Keyness terms for a recommendation set (seed plus neighbors vs the rest).
    pub fn explanation_terms(
        &self,
        rec: &RecommendationSet,
        k: usize,
    ) -> Result<Vec<String>, TextlabError> {
        let neighbors: Vec<&str> = rec.neighbor_ids().collect();
        label_recommendation_set(self.caption_terms(), &rec.seed_id, &neighbors, k)
    }

    pub fn fulltext(&self) -> &FulltextIndex {
        &self.fulltext
    }

    pub fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, CorpusError> {
        self.fulltext.search(query, limit)
    }

    pub fn caption_stats(
        &self,
        hedges: &HedgeLexicon,
        token_cap: u32,
    ) -> Result<CaptionStats, TextlabError> {
        caption_stats(self.captions(), hedges, token_cap)
    }

    pub fn clusters(&self) -> Option<&ClusterAssignment> {
        self.clusters.as_ref()
    }

    pub fn projection(&self) -> Option<&Projection2D> {
        self.projection.as_ref()
    }

    pub fn reports(&self) -> &EvaluationReports {
        &self.reports
    }

    pub fn status_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.record.status.as_str()).or_insert(0) += 1;
        }
        out
    }
}

/// Assembles and cross-checks a [`CorpusSnapshot`].
pub struct SnapshotBuilder {
    version: u64,
    entries: Vec<ManifestEntry>,
    spaces: Vec<EmbeddingSpace>,
    bm25: Bm25Params,
    tagger: Option<Arc<dyn Tagger>>,
    clusters: Option<ClusterAssignment>,
    projection: Option<Projection2D>,
    reports: EvaluationReports,
}

impl SnapshotBuilder {
    pub fn new(version: u64) -> Self {
        SnapshotBuilder {
            version,
            entries: Vec::new(),
            spaces: Vec::new(),
            bm25: Bm25Params::default(),
            tagger: None,
            clusters: None,
            projection: None,
            reports: EvaluationReports::default(),
        }
    }

    pub fn entries(mut self, entries: Vec<ManifestEntry>) -> Self {
        self.entries = entries;
        self
    }

    pub fn space(mut self, space: EmbeddingSpace) -> Self {
        self.spaces.push(space);
        self
    }

    pub fn bm25(mut self, params: Bm25Params) -> Self {
        self.bm25 = params;
        self
    }

    pub fn tagger(mut self, tagger: Arc<dyn Tagger>) -> Self {
        self.tagger = Some(tagger);
        self
    }

    pub fn clusters(mut self, clusters: Option<ClusterAssignment>) -> Self {
        self.clusters = clusters;
        self
    }

    pub fn projection(mut self, projection: Option<Projection2D>) -> Self {
        self.projection = projection;
        self
    }

    pub fn reports(mut self, reports: EvaluationReports) -> Self {
        self.reports = reports;
        self
    }

    pub fn build(self) -> Result<CorpusSnapshot, CorpusError> {
        let mut index = HashMap::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            e.validate().map_err(|message| CorpusError::Inconsistent {
                id: e.record.id.clone(),
                message,
            })?;
            if index.insert(e.record.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    id: e.record.id.clone(),
                    line: i + 1,
                });
            }
        }
        let mut spaces = BTreeMap::new();
        for space in self.spaces {
            for id in space.ids() {
                let Some(&i) = index.get(id) else {
                    return Err(CorpusError::DanglingReference {
                        what: format!("space {:?}", space.name()),
                        id: id.clone(),
                    });
                };
                let e = &self.entries[i];
                if e.record.status == Status::Rejected {
                    return Err(CorpusError::Inconsistent {
                        id: id.clone(),
                        message: format!("rejected image has a vector in {:?}", space.name()),
                    });
                }
                if space.name() == CAPTION_SPACE && e.caption.is_none() {
                    return Err(CorpusError::Inconsistent {
                        id: id.clone(),
                        message: "caption-space vector without a caption".into(),
                    });
                }
            }
            let name = space.name().to_string();
            if spaces.insert(name.clone(), Arc::new(space)).is_some() {
                return Err(CorpusError::Format(format!("space {name:?} given twice")));
            }
        }
        let caption_space = spaces.get(CAPTION_SPACE);
        for e in &self.entries {
            if e.record.status == Status::Embedded
                && !caption_space.is_some_and(|s| s.contains(&e.record.id))
            {
                return Err(CorpusError::Inconsistent {
                    id: e.record.id.clone(),
                    message: "status embedded but no caption-space vector".into(),
                });
            }
        }
        if let Some(c) = &self.clusters {
            let invalid = |message: String| CorpusError::InvalidArtifact {
                what: "clusters".into(),
                message,
            };
            c.validate().map_err(|e| invalid(e.to_string()))?;
            let space = spaces
                .get(&c.space_name)
                .ok_or_else(|| invalid(format!("unknown space {:?}", c.space_name)))?;
            if space.ids() != c.ids.as_slice() {
                return Err(invalid(format!(
                    "assignment does not cover space {:?} in row order",
                    c.space_name
                )));
            }
        }
        if let Some(p) = &self.projection {
            if let Some(id) = p.ids.iter().find(|id| !index.contains_key(*id)) {
                return Err(CorpusError::DanglingReference {
                    what: "projection".into(),
                    id: id.clone(),
                });
            }
            if p.coords.len() != p.ids.len() {
                return Err(CorpusError::InvalidArtifact {
                    what: "projection".into(),
                    message: "coords and ids differ in length".into(),
                });
            }
        }
        let fulltext = FulltextIndex::build_with(
            self.entries.iter().filter_map(|e| e.caption.as_ref()),
            self.bm25,
        );
        let cosine = spaces.keys().map(|k| (k.clone(), OnceLock::new())).collect();
        Ok(CorpusSnapshot {
            version: self.version,
            entries: self.entries,
            index,
            spaces,
            cosine,
            fulltext,
            tagger: self.tagger.unwrap_or_else(|| Arc::new(RuleTagger::default())),
            terms: OnceLock::new(),
            clusters: self.clusters,
            projection: self.projection,
            reports: self.reports,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, caption: Option<&str>, status: Status) -> ManifestEntry {
        let mut r = ImageRecord::pending(id, format!("{id}.jpg"), 10, 10);
        r.status = status;
        if status == Status::Rejected {
            r.rejection_reason = Some("refused".into());
        }
        ManifestEntry {
            record: r,
            caption: caption.map(|t| Caption::new(id, t, 5, "m", "p")),
        }
    }

    fn fixture() -> CorpusSnapshot {
        let mut caption = EmbeddingSpace::new(CAPTION_SPACE, 2).unwrap();
        caption.push("a", &[1.0, 0.0]).unwrap();
        caption.push("b", &[0.9, 0.1]).unwrap();
        caption.push("c", &[0.0, 1.0]).unwrap();
        CorpusSnapshot::builder(3)
            .entries(vec![
                entry("a", Some("A dairy barn with cows."), Status::Embedded),
                entry("b", Some("Cows graze near a barn."), Status::Embedded),
                entry("c", Some("A boat on a lake."), Status::Embedded),
                entry("r", None, Status::Rejected),
            ])
            .space(caption)
            .build()
            .unwrap()
    }

    #[test]
    fn queries() {
        let s = fixture();
        assert_eq!(s.version(), 3);
        let rec = s.top_n("a", 1, CAPTION_SPACE).unwrap();
        assert_eq!(rec.neighbors[0].image_id, "b");
        assert_eq!(s.search("dairy", 5).unwrap()[0].image_id, "a");
        assert_eq!(s.status_counts()["embedded"], 3);
        assert_eq!(s.top_n("a", 2, CAPTION_SPACE).unwrap(), s.top_n("a", 2, CAPTION_SPACE).unwrap());
    }

    #[test]
    fn query_errors() {
        let s = fixture();
        assert!(matches!(s.top_n("a", 1, "visual"), Err(SimilarityError::UnknownSpace(_))));
        assert!(matches!(s.top_n("zz", 1, CAPTION_SPACE), Err(SimilarityError::UnknownSeed(_))));
        assert!(matches!(
            s.top_n("r", 1, CAPTION_SPACE),
            Err(SimilarityError::NoVector { .. })
        ));
    }

    #[test]
    fn cross_reference_checks() {
        let mut sp = EmbeddingSpace::new(CAPTION_SPACE, 1).unwrap();
        sp.push("ghost", &[1.0]).unwrap();
        let err = CorpusSnapshot::builder(1).space(sp).build().unwrap_err();
        assert!(matches!(err, CorpusError::DanglingReference { .. }));

        let err = CorpusSnapshot::builder(1)
            .entries(vec![entry("a", Some("x"), Status::Embedded)])
            .build()
            .unwrap_err();
        assert!(matches!(err, CorpusError::Inconsistent { .. }));

        let mut sp = EmbeddingSpace::new(CAPTION_SPACE, 1).unwrap();
        sp.push("r", &[1.0]).unwrap();
        let err = CorpusSnapshot::builder(1)
            .entries(vec![entry("r", None, Status::Rejected)])
            .space(sp)
            .build()
            .unwrap_err();
        assert!(matches!(err, CorpusError::Inconsistent { .. }));
    }
}
