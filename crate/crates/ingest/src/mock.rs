//! Deterministic providers for tests, fixtures and offline runs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;
use capsight_core::textlab::words;

use crate::provider::{
    CaptionOutput, CaptionProvider, CaptionRequest, EmbeddingProvider, ProviderResult,
};
use crate::IngestError;

/// Scripted behaviour for one image id.
#[derive(Debug, Clone, PartialEq)]
pub enum MockScript {
    Text(String),
    Reject(String),
    /// Fails transiently this many times, then captions normally.
    TransientThenOk(u32),
    AlwaysTransient,
}

/// The refusal message the live API returns for blocked images.
pub const SAFETY_REFUSAL: &str =
    "Your input image may contain content that is not allowed by our safety system.";

/// Captions without looking at pixels.
///
/// Unscripted images are described by `metadata["caption"]`, else by their
/// title, else by a fixed sentence. Token usage is `ceil(words * 4 / 3)`; text
/// longer than the cap allows is cut to `floor(max_tokens * 3 / 4)` words and
/// reports exactly `max_tokens`, so capped captions can be told apart.
#[derive(Debug, Default)]
pub struct MockCaptionProvider {
    model_id: String,
    scripts: HashMap<String, MockScript>,
    attempts: Mutex<HashMap<String, u32>>,
    calls: AtomicUsize,
}

impl MockCaptionProvider {
    pub fn new() -> Self {
        MockCaptionProvider {
            model_id: "mock-captioner".into(),
            ..Default::default()
        }
    }

    pub fn script(mut self, id: impl Into<String>, script: MockScript) -> Self {
        self.scripts.insert(id.into(), script);
        self
    }

    /// Total requests received, retries included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn default_text(request: &CaptionRequest<'_>) -> String {
        let r = request.record;
        if let Some(c) = r.metadata.get("caption").filter(|c| !c.trim().is_empty()) {
            c.clone()
        } else if !r.title.trim().is_empty() {
            format!("A photograph of {}.", r.title.trim())
        } else {
            "An archival documentary photograph.".to_string()
        }
    }
}

/// Token usage the mock reports for `text`, and the text after capping.
pub fn mock_token_usage(text: &str, max_tokens: u32) -> (String, u32) {
    let n_words = text.split_whitespace().count() as u64;
    let tokens = (n_words * 4).div_ceil(3);
    if tokens <= max_tokens as u64 {
        return (text.to_string(), tokens as u32);
    }
    let keep = (max_tokens as usize * 3) / 4;
    let cut: Vec<&str> = text.split_whitespace().take(keep.max(1)).collect();
    (cut.join(" "), max_tokens)
}

#[async_trait]
impl CaptionProvider for MockCaptionProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    async fn caption(&self, request: &CaptionRequest<'_>) -> ProviderResult<CaptionOutput> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let id = &request.record.id;
        let attempt = {
            let mut a = self.attempts.lock().expect("mock attempts lock");
            let n = a.entry(id.clone()).or_insert(0);
            *n += 1;
            *n
        };
        let text = match self.scripts.get(id) {
            Some(MockScript::Reject(reason)) => return ProviderResult::Rejected(reason.clone()),
            Some(MockScript::AlwaysTransient) => {
                return ProviderResult::TransientError(format!("scripted failure #{attempt}"))
            }
            Some(MockScript::TransientThenOk(n)) if attempt <= *n => {
                return ProviderResult::TransientError(format!("scripted failure #{attempt}"))
            }
            Some(MockScript::Text(t)) => t.clone(),
            _ => Self::default_text(request),
        };
        let (text, token_usage) = mock_token_usage(&text, request.max_tokens);
        ProviderResult::Ok(CaptionOutput { text, token_usage })
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hash_into(v: &mut [f64], seed: u64, token: &[u8]) {
    let h = fnv1a(seed, token);
    let idx = (h % v.len() as u64) as usize;
    v[idx] += if h >> 63 == 1 { -1.0 } else { 1.0 };
}

/// Hashes lowercase word tokens into `dimension` signed buckets and scales the
/// result to unit norm.
///
/// Texts sharing tokens share buckets, so their cosine is higher than that of
/// texts with disjoint vocabularies (barring collisions). If all buckets
/// cancel, or the text has no alphanumeric words, the raw text is hashed
/// instead, so every non-blank text yields a unit vector.
pub fn deterministic_mock_embedding(
    text: &str,
    dimension: usize,
    seed: u64,
) -> Result<Vec<f32>, IngestError> {
    if dimension == 0 {
        return Err(IngestError::Config("embedding dimension must be at least 1".into()));
    }
    if text.trim().is_empty() {
        return Err(IngestError::EmptyText);
    }
    let mut acc = vec![0.0f64; dimension];
    for w in words(text) {
        hash_into(&mut acc, seed, w.to_lowercase().as_bytes());
    }
    if acc.iter().all(|&x| x == 0.0) {
        hash_into(&mut acc, seed ^ 0x9e37_79b9_7f4a_7c15, text.trim().as_bytes());
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(acc.iter().map(|x| (x / norm) as f32).collect())
}

/// Embeds with [`deterministic_mock_embedding`].
#[derive(Debug)]
pub struct MockEmbeddingProvider {
    dimension: usize,
    seed: u64,
    calls: AtomicUsize,
}

impl MockEmbeddingProvider {
    pub fn new(dimension: usize, seed: u64) -> Self {
        MockEmbeddingProvider {
            dimension,
            seed,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl EmbeddingProvider for MockEmbeddingProvider {
    fn model_id(&self) -> &str {
        "mock-hash-embedding"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    async fn embed(&self, text: &str) -> ProviderResult<Vec<f32>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match deterministic_mock_embedding(text, self.dimension, self.seed) {
            Ok(v) => ProviderResult::Ok(v),
            Err(e) => ProviderResult::Rejected(e.to_string()),
        }
    }
}
