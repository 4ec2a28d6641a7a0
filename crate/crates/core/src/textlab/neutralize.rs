//! Whole-word, case-preserving replacement of gendered terms.

use std::collections::BTreeMap;
use std::path::Path;

use super::tokenize::{parse_pairs, read_resource};
use super::TextlabError;

const BUILTIN: &str = include_str!("../../resources/neutralization.tsv");

/// Lowercase source word to replacement word.
///
/// No entry maps a word to itself, every replacement is a single
/// alphanumeric token, and no replacement is itself a key, which makes
/// [`neutralize`] idempotent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeutralizationLexicon {
    entries: BTreeMap<String, String>,
}

impl Default for NeutralizationLexicon {
    fn default() -> Self {
        Self::from_text(BUILTIN).expect("builtin neutralization lexicon")
    }
}

impl NeutralizationLexicon {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self, TextlabError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut entries = BTreeMap::new();
        for (from, to) in pairs {
            let from = from.as_ref().to_lowercase();
            let to = to.as_ref().to_lowercase();
            let single = |w: &str| !w.is_empty() && w.chars().all(char::is_alphanumeric);
            if !single(&from) || !single(&to) {
                return Err(TextlabError::InvalidLexicon(format!(
                    "{from:?} -> {to:?}: entries must be single words"
                )));
            }
            if from == to {
                return Err(TextlabError::InvalidLexicon(format!(
                    "{from:?} maps to itself"
                )));
            }
            entries.insert(from, to);
        }
        if let Some(to) = entries.values().find(|to| entries.contains_key(*to)) {
            return Err(TextlabError::InvalidLexicon(format!(
                "replacement {to:?} is also a source word"
            )));
        }
        Ok(NeutralizationLexicon { entries })
    }

    pub fn from_text(text: &str) -> Result<Self, TextlabError> {
        Self::from_pairs(parse_pairs(text, "neutralization lexicon")?)
    }

    pub fn from_file(path: &Path) -> Result<Self, TextlabError> {
        Self::from_text(&read_resource(path)?)
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.entries.get(&word.to_lowercase()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn match_case(source: &str, replacement: &str) -> String {
    let mut chars = source.chars();
    let first_upper = chars.next().is_some_and(char::is_uppercase);
    let all_upper = source.chars().count() > 1 && source.chars().all(|c| !c.is_lowercase());
    if all_upper {
        replacement.to_uppercase()
    } else if first_upper {
        let mut r = replacement.chars();
        match r.next() {
            Some(f) => f.to_uppercase().chain(r).collect(),
            None => String::new(),
        }
    } else {
        replacement.to_string()
    }
}

pub fn neutralize(text: &str, lexicon: &NeutralizationLexicon) -> String {
    let mut out = String::with_capacity(text.len());
    let mut word_start: Option<usize> = None;
    let flush = |out: &mut String, word: &str| match lexicon.get(word) {
        Some(rep) => out.push_str(&match_case(word, rep)),
        None => out.push_str(word),
    };
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            word_start.get_or_insert(i);
        } else {
            if let Some(s) = word_start.take() {
                flush(&mut out, &text[s..i]);
            }
            out.push(ch);
        }
    }
    if let Some(s) = word_start {
        flush(&mut out, &text[s..]);
    }
    out
}
