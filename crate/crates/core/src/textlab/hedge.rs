//! Hedge-phrase detection ("appears to be", "possibly", ...).

use std::path::Path;

use serde::Serialize;

use super::tokenize::{read_resource, resource_lines, words};
use super::TextlabError;

const HEDGES: &str = include_str!("../../resources/hedges.txt");

/// Phrases matched case-insensitively on word boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HedgeLexicon {
    phrases: Vec<(String, Vec<String>)>,
}

impl Default for HedgeLexicon {
    fn default() -> Self {
        Self::from_text(HEDGES).expect("builtin hedge lexicon")
    }
}

impl HedgeLexicon {
    pub fn new<S: AsRef<str>>(phrases: &[S]) -> Result<Self, TextlabError> {
        let mut out = Vec::new();
        for p in phrases {
            let p = p.as_ref().trim();
            let toks: Vec<String> = words(p).map(str::to_lowercase).collect();
            if toks.is_empty() {
                return Err(TextlabError::Resource(format!("empty hedge phrase {p:?}")));
            }
            out.push((p.to_string(), toks));
        }
        Ok(HedgeLexicon { phrases: out })
    }

    pub fn from_text(text: &str) -> Result<Self, TextlabError> {
        Self::new(&resource_lines(text).collect::<Vec<_>>())
    }

    pub fn from_file(path: &Path) -> Result<Self, TextlabError> {
        Self::from_text(&read_resource(path)?)
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.phrases.iter().map(|(p, _)| p.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HedgeMatch {
    pub hedged: bool,
    /// Matched phrases in lexicon order, each at most once.
    pub phrases: Vec<String>,
}

pub fn detect_hedges(text: &str, lexicon: &HedgeLexicon) -> HedgeMatch {
    let toks: Vec<String> = words(text).map(str::to_lowercase).collect();
    let phrases: Vec<String> = lexicon
        .phrases
        .iter()
        .filter(|(_, p)| toks.windows(p.len()).any(|w| w == p.as_slice()))
        .map(|(raw, _)| raw.clone())
        .collect();
    HedgeMatch {
        hedged: !phrases.is_empty(),
        phrases,
    }
}
