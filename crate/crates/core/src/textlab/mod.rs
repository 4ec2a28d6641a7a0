//! Caption text analytics: tokenization and noun tagging, G² keyness,
//! recommendation-set labels, hedge detection, caption statistics and
//! gendered-term neutralization.

mod hedge;
mod keyness;
mod label;
mod neutralize;
mod stats;
mod tokenize;

use thiserror::Error;

pub use hedge::{detect_hedges, HedgeLexicon, HedgeMatch};
pub use keyness::{g2, keyness_rank, ContingencyTable, KeynessScore};
pub use label::{label_recommendation_set, CaptionTerms, SET_MIN_TARGET_COUNT, SET_TERMS};
pub use neutralize::{neutralize, NeutralizationLexicon};
pub use stats::{caption_stats, CaptionStats, MeanSd};
pub use tokenize::{tokenize_and_tag, words, Lexicons, RuleTagger, Tagger, Token};

#[derive(Debug, Error)]
pub enum TextlabError {
    #[error("resource: {0}")]
    Resource(String),
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),
    #[error("invalid contingency table a={a} b={b} c={c} d={d}")]
    InvalidTable { a: u64, b: u64, c: u64, d: u64 },
    #[error("target corpus is empty")]
    EmptyTarget,
    #[error("reference corpus is empty")]
    EmptyReference,
    #[error("image {0} has no caption")]
    MissingCaption(String),
    #[error("need at least 2 captions, found {found}")]
    TooFewCaptions { found: usize },
}
