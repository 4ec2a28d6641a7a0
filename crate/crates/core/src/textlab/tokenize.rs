//! Tokenization, rule-based lemmatization and noun tagging.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use super::TextlabError;

/// Splits on whitespace and punctuation: every maximal run of alphanumeric
/// characters is a word.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Lowercase, never empty.
    pub lemma: String,
    pub is_noun: bool,
}

/// Turns text into tagged tokens. Implementations must be deterministic and
/// total over arbitrary UTF-8.
pub trait Tagger: Send + Sync {
    fn tag(&self, text: &str) -> Vec<Token>;

    /// Noun lemmas of `text`, in order.
    fn noun_lemmas(&self, text: &str) -> Vec<String> {
        self.tag(text)
            .into_iter()
            .filter(|t| t.is_noun)
            .map(|t| t.lemma)
            .collect()
    }
}

const NOUNS: &str = include_str!("../../resources/nouns.txt");
const VERBS: &str = include_str!("../../resources/verbs.txt");
const ADJECTIVES: &str = include_str!("../../resources/adjectives.txt");
const STOPWORDS: &str = include_str!("../../resources/stopwords.txt");
const IRREGULARS: &str = include_str!("../../resources/irregulars.tsv");

/// Word lists backing [`RuleTagger`]. Each list is a plain-text resource with
/// one entry per line (`#` starts a comment); irregular lemmas are
/// tab-separated `form<TAB>lemma` pairs.
#[derive(Debug, Clone, Default)]
pub struct Lexicons {
    pub nouns: HashSet<String>,
    pub verbs: HashSet<String>,
    pub adjectives: HashSet<String>,
    pub closed_class: HashSet<String>,
    pub irregulars: HashMap<String, String>,
}

pub(crate) fn resource_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn word_set(text: &str) -> HashSet<String> {
    resource_lines(text).map(str::to_lowercase).collect()
}

pub(crate) fn parse_pairs(text: &str, what: &str) -> Result<Vec<(String, String)>, TextlabError> {
    resource_lines(text)
        .enumerate()
        .map(|(i, line)| {
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.trim().is_empty() && !b.trim().is_empty() => {
                    Ok((a.trim().to_string(), b.trim().to_string()))
                }
                _ => Err(TextlabError::Resource(format!(
                    "{what}: entry {} is not a tab-separated pair: {line:?}",
                    i + 1
                ))),
            }
        })
        .collect()
}

pub(crate) fn read_resource(path: &Path) -> Result<String, TextlabError> {
    std::fs::read_to_string(path)
        .map_err(|e| TextlabError::Resource(format!("{}: {e}", path.display())))
}

impl Lexicons {
    /// The lists compiled into the crate.
    pub fn builtin() -> Self {
        Lexicons {
            nouns: word_set(NOUNS),
            verbs: word_set(VERBS),
            adjectives: word_set(ADJECTIVES),
            closed_class: word_set(STOPWORDS),
            irregulars: parse_pairs(IRREGULARS, "irregulars")
                .expect("builtin irregulars parse")
                .into_iter()
                .map(|(a, b)| (a.to_lowercase(), b.to_lowercase()))
                .collect(),
        }
    }

    pub fn with_nouns_file(mut self, path: &Path) -> Result<Self, TextlabError> {
        self.nouns = word_set(&read_resource(path)?);
        Ok(self)
    }

    pub fn with_irregulars_file(mut self, path: &Path) -> Result<Self, TextlabError> {
        self.irregulars = parse_pairs(&read_resource(path)?, "irregulars")?
            .into_iter()
            .map(|(a, b)| (a.to_lowercase(), b.to_lowercase()))
            .collect();
        Ok(self)
    }
}

/// Default lexicon-and-suffix tagger.
///
/// Decision order for a lowercased word: closed-class list, irregular table,
/// noun lexicon (surface or singular form), verb and adjective lexicons
/// (including inflected verb forms), agentive `-er` on a known verb stem,
/// adjective/adverb suffixes, nominal suffixes, and finally "noun" for any
/// remaining alphabetic word.
#[derive(Debug, Clone)]
pub struct RuleTagger {
    lex: Arc<Lexicons>,
}

impl Default for RuleTagger {
    fn default() -> Self {
        static BUILTIN: OnceLock<Arc<Lexicons>> = OnceLock::new();
        RuleTagger {
            lex: BUILTIN.get_or_init(|| Arc::new(Lexicons::builtin())).clone(),
        }
    }
}

const PLURAL_S_EXCEPTIONS: &[&str] = &[
    "news", "series", "species", "lens", "gas", "bus", "canvas", "chassis", "atlas", "physics",
    "mathematics", "economics", "politics", "athletics", "gymnastics", "trousers", "pants",
    "scissors", "glasses", "jeans", "clothes", "surroundings", "premises", "headquarters",
    "mumps", "tennis", "bonus", "campus", "circus", "status", "virus", "octopus", "cactus",
    "walrus", "iris", "basis", "oasis", "analysis", "axis", "crisis", "emphasis", "thesis",
];

const ADJ_SUFFIXES: &[&str] = &[
    "ly", "ous", "ful", "ive", "ic", "ical", "ial", "able", "ible", "less", "ish", "est",
];

const NOUN_SUFFIXES: &[&str] = &[
    "tion", "sion", "ment", "ness", "ity", "ship", "ance", "ence", "ism", "ist", "hood", "dom",
];

impl RuleTagger {
    pub fn new(lexicons: Lexicons) -> Self {
        RuleTagger {
            lex: Arc::new(lexicons),
        }
    }

    pub fn lexicons(&self) -> &Lexicons {
        &self.lex
    }

    /// Singular form of a (possibly plural) noun.
    pub fn singular(&self, w: &str) -> String {
        if let Some(l) = self.lex.irregulars.get(w) {
            return l.clone();
        }
        if w.chars().count() <= 3 || !w.ends_with('s') || PLURAL_S_EXCEPTIONS.contains(&w) {
            return w.to_string();
        }
        let drop_s = &w[..w.len() - 1];
        if self.lex.nouns.contains(drop_s) {
            return drop_s.to_string();
        }
        if let Some(stem) = w.strip_suffix("ies") {
            if w.len() > 4 {
                return format!("{stem}y");
            }
        }
        if let Some(stem) = w.strip_suffix("es") {
            if self.lex.nouns.contains(stem)
                || ["ss", "x", "z", "ch", "sh"].iter().any(|s| stem.ends_with(s))
            {
                return stem.to_string();
            }
        }
        if w.ends_with("ss") || w.ends_with("us") || w.ends_with("is") {
            return w.to_string();
        }
        drop_s.to_string()
    }

    /// Base form of an inflected verb (`-s`, `-es`, `-ies`, `-ed`, `-ied`, `-ing`),
    /// or `None` when the word carries no verbal suffix.
    pub fn verb_base(&self, w: &str) -> Option<String> {
        if let Some(l) = self.lex.irregulars.get(w) {
            return Some(l.clone());
        }
        let verbs = &self.lex.verbs;
        let resolve = |stem: &str| -> String {
            if verbs.contains(stem) {
                return stem.to_string();
            }
            let e = format!("{stem}e");
            if verbs.contains(&e) {
                return e;
            }
            let b = stem.as_bytes();
            if b.len() >= 3 && b[b.len() - 1] == b[b.len() - 2] {
                let undoubled = &stem[..stem.len() - 1];
                if verbs.contains(undoubled) || !matches!(b[b.len() - 1], b'l' | b's' | b'z') {
                    return undoubled.to_string();
                }
            }
            stem.to_string()
        };
        if let Some(stem) = w.strip_suffix("ing") {
            if stem.len() >= 2 {
                return Some(resolve(stem));
            }
        }
        if let Some(stem) = w.strip_suffix("ied") {
            if stem.len() >= 2 {
                return Some(format!("{stem}y"));
            }
        }
        if let Some(stem) = w.strip_suffix("ed") {
            if stem.len() >= 2 {
                return Some(resolve(stem));
            }
        }
        if let Some(stem) = w.strip_suffix("ies") {
            if stem.len() >= 2 {
                return Some(format!("{stem}y"));
            }
        }
        if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") {
            let stem = &w[..w.len() - 1];
            if verbs.contains(stem) {
                return Some(stem.to_string());
            }
            if let Some(es) = w.strip_suffix("es") {
                if verbs.contains(es) {
                    return Some(es.to_string());
                }
            }
            return Some(stem.to_string());
        }
        None
    }

    fn tag_word(&self, surface: &str) -> Token {
        let w = surface.to_lowercase();
        let lex = &*self.lex;
        let token = |lemma: String, is_noun: bool| Token {
            surface: surface.to_string(),
            lemma,
            is_noun,
        };
        if !w.chars().any(char::is_alphabetic) || w.chars().count() < 2 {
            return token(w, false);
        }
        if lex.closed_class.contains(&w) {
            let lemma = lex.irregulars.get(&w).cloned().unwrap_or_else(|| w.clone());
            return token(lemma, false);
        }
        if let Some(lemma) = lex.irregulars.get(&w) {
            let noun = lex.nouns.contains(lemma);
            return token(lemma.clone(), noun);
        }
        if lex.nouns.contains(&w) {
            return token(w, true);
        }
        let singular = self.singular(&w);
        if singular != w && lex.nouns.contains(&singular) {
            return token(singular, true);
        }
        if lex.verbs.contains(&w) || lex.adjectives.contains(&w) {
            return token(w, false);
        }
        let verbal = w.ends_with("ing") || w.ends_with("ed") || w.ends_with('s');
        if verbal {
            if let Some(base) = self.verb_base(&w) {
                if lex.verbs.contains(&base) || w.ends_with("ing") || w.ends_with("ed") {
                    return token(base, false);
                }
            }
        }
        if let Some(stem) = singular.strip_suffix("er") {
            let e_stem = format!("{stem}e");
            if lex.verbs.contains(stem) || lex.verbs.contains(&e_stem) {
                return token(singular, true);
            }
            if lex.adjectives.contains(stem) || lex.adjectives.contains(&e_stem) {
                return token(w, false);
            }
        }
        if ADJ_SUFFIXES.iter().any(|s| w.ends_with(s)) && !NOUN_SUFFIXES.iter().any(|s| w.ends_with(s)) {
            return token(w, false);
        }
        token(singular, true)
    }
}

impl Tagger for RuleTagger {
    fn tag(&self, text: &str) -> Vec<Token> {
        words(text).map(|w| self.tag_word(w)).collect()
    }
}

/// Tags `text` with the built-in [`RuleTagger`].
pub fn tokenize_and_tag(text: &str) -> Vec<Token> {
    RuleTagger::default().tag(text)
}
