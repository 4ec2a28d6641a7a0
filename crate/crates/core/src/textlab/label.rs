//! Keyness labels for groups of captioned images.

use std::collections::{BTreeSet, HashMap};

use super::keyness::{keyness_rank, KeynessScore};
use super::tokenize::Tagger;
use super::TextlabError;

/// Noun-lemma counts per captioned image plus corpus totals.
#[derive(Debug, Clone, Default)]
pub struct CaptionTerms {
    per_image: HashMap<String, HashMap<String, u64>>,
    totals: HashMap<String, u64>,
}

impl CaptionTerms {
    pub fn build<'a, I>(captions: I, tagger: &dyn Tagger) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut terms = CaptionTerms::default();
        for (id, text) in captions {
            let mut counts = HashMap::new();
            for lemma in tagger.noun_lemmas(text) {
                *counts.entry(lemma).or_insert(0) += 1;
            }
            terms.insert(id, counts);
        }
        terms
    }

    fn insert(&mut self, id: &str, counts: HashMap<String, u64>) {
        if let Some(old) = self.per_image.remove(id) {
            for (t, n) in old {
                let total = self.totals.get_mut(&t).expect("tracked term");
                *total -= n;
                if *total == 0 {
                    self.totals.remove(&t);
                }
            }
        }
        for (t, &n) in &counts {
            *self.totals.entry(t.clone()).or_insert(0) += n;
        }
        self.per_image.insert(id.to_string(), counts);
    }

    pub fn len(&self) -> usize {
        self.per_image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_image.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.per_image.contains_key(id)
    }

    pub fn counts(&self, id: &str) -> Option<&HashMap<String, u64>> {
        self.per_image.get(id)
    }

    pub fn totals(&self) -> &HashMap<String, u64> {
        &self.totals
    }

    /// Splits the corpus into (target, reference) counts; duplicate members count once.
    pub fn split<S: AsRef<str>>(
        &self,
        members: &[S],
    ) -> Result<(HashMap<String, u64>, HashMap<String, u64>), TextlabError> {
        let members: BTreeSet<&str> = members.iter().map(AsRef::as_ref).collect();
        let mut target: HashMap<String, u64> = HashMap::new();
        for id in &members {
            let counts = self
                .per_image
                .get(*id)
                .ok_or_else(|| TextlabError::MissingCaption(id.to_string()))?;
            for (t, &n) in counts {
                *target.entry(t.clone()).or_insert(0) += n;
            }
        }
        if members.len() == self.per_image.len() {
            return Err(TextlabError::EmptyReference);
        }
        let reference = self
            .totals
            .iter()
            .filter_map(|(t, &n)| {
                let rest = n - target.get(t).copied().unwrap_or(0);
                (rest > 0).then(|| (t.clone(), rest))
            })
            .collect();
        Ok((target, reference))
    }

    /// Keyness of `members` against every other captioned image.
    pub fn label<S: AsRef<str>>(
        &self,
        members: &[S],
        min_target_count: u64,
        k: usize,
    ) -> Result<Vec<KeynessScore>, TextlabError> {
        let (target, reference) = self.split(members)?;
        keyness_rank(&target, &reference, min_target_count, k)
    }
}

pub const SET_MIN_TARGET_COUNT: u64 = 2;
pub const SET_TERMS: usize = 5;

/// Terms for a recommendation set: the seed plus its neighbors form the target.
pub fn label_recommendation_set<S: AsRef<str>>(
    terms: &CaptionTerms,
    seed: &str,
    neighbors: &[S],
    k: usize,
) -> Result<Vec<String>, TextlabError> {
    let mut members: Vec<&str> = vec![seed];
    members.extend(neighbors.iter().map(AsRef::as_ref));
    Ok(terms
        .label(&members, SET_MIN_TARGET_COUNT, k)?
        .into_iter()
        .map(|s| s.term)
        .collect())
}
