//! TOML configuration shared by the pipeline, the server and the CLI.
//!
//! Every section and key is optional; missing values take the defaults below.
//! Unknown keys are rejected so typos surface instead of silently falling back.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::resize::ResizeRule;
use crate::IngestError;

/// The captioning prompt, verbatim.
pub const DEFAULT_PROMPT: &str = "Provide a detailed plain-text description of the objects, activities, people, background and/or composition of this photograph";
pub const DEFAULT_PROMPT_ID: &str = "describe-v1";
pub const DEFAULT_MAX_TOKENS: u32 = 500;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub paths: PathsConfig,
    pub caption: CaptionProviderConfig,
    pub embedding: EmbeddingProviderConfig,
    pub retry: RetryPolicy,
    pub resize: ResizeRule,
    pub server: ServerConfig,
    pub textlab: TextlabConfig,
    pub cluster: ClusterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Corpus directory: manifest, embeddings, clusters, thumbnails.
    pub artifacts: PathBuf,
    /// Root that manifest `source_path`s are resolved against.
    pub images: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            artifacts: PathBuf::from("artifacts"),
            images: PathBuf::from("images"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaptionProviderConfig {
    pub provider: ProviderKind,
    pub endpoint: String,
    pub model_id: String,
    pub prompt: String,
    /// Recorded on every caption so prompt changes stay traceable.
    pub prompt_id: String,
    pub max_tokens: u32,
    pub max_concurrency: usize,
    pub api_key_env: String,
    pub jpeg_quality: u8,
}

impl Default for CaptionProviderConfig {
    fn default() -> Self {
        CaptionProviderConfig {
            provider: ProviderKind::Mock,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_id: "gpt-4-turbo-2024-04-09".into(),
            prompt: DEFAULT_PROMPT.into(),
            prompt_id: DEFAULT_PROMPT_ID.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            max_concurrency: 4,
            api_key_env: "OPENAI_API_KEY".into(),
            jpeg_quality: 90,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingProviderConfig {
    pub provider: ProviderKind,
    pub endpoint: String,
    pub model_id: String,
    pub dimension: usize,
    pub max_concurrency: usize,
    pub api_key_env: String,
    /// Hash seed of the mock provider.
    pub seed: u64,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        EmbeddingProviderConfig {
            provider: ProviderKind::Mock,
            endpoint: "https://api.openai.com/v1/embeddings".into(),
            model_id: "text-embedding-3-large".into(),
            dimension: 3072,
            max_concurrency: 4,
            api_key_env: "OPENAI_API_KEY".into(),
            seed: 7,
        }
    }
}

/// Exponential backoff for transient provider failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_backoff_ms: 1000,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, for `attempt` starting at 1.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        Duration::from_secs_f64(self.base_backoff_ms as f64 / 1000.0 * factor)
    }

    /// No waiting between attempts; for tests.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_backoff_ms: 0,
            multiplier: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServerConfig {
    pub bind: String,
    pub allowed_origins: Vec<String>,
    pub thumbnail_long_side: u32,
    pub thumbnail_quality: u8,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1:8080".into(),
            allowed_origins: vec!["http://localhost:5173".into()],
            thumbnail_long_side: 256,
            thumbnail_quality: 85,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextlabConfig {
    /// Replaces the built-in hedge phrase list.
    pub hedge_lexicon: Option<PathBuf>,
    /// Used by `embed --neutralize`.
    pub neutralization_lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub k: usize,
    pub space: String,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k: 32,
            space: "caption".into(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        let cfg: Config = toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| IngestError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.artifacts);
        fix(&mut self.paths.images);
        if let Some(p) = self.textlab.hedge_lexicon.as_mut() {
            fix(p);
        }
        if let Some(p) = self.textlab.neutralization_lexicon.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::Config(m.to_string()));
        if self.caption.max_tokens == 0 {
            return bad("caption.max_tokens must be at least 1");
        }
        if self.caption.max_concurrency == 0 || self.embedding.max_concurrency == 0 {
            return bad("max_concurrency must be at least 1");
        }
        if !(1..=100).contains(&self.caption.jpeg_quality)
            || !(1..=100).contains(&self.server.thumbnail_quality)
        {
            return bad("JPEG quality must lie in 1..=100");
        }
        if self.embedding.dimension == 0 {
            return bad("embedding.dimension must be at least 1");
        }
        if self.retry.max_attempts == 0 {
            return bad("retry.max_attempts must be at least 1");
        }
        if !(self.retry.multiplier.is_finite() && self.retry.multiplier >= 1.0) {
            return bad("retry.multiplier must be finite and >= 1");
        }
        if self.server.thumbnail_long_side == 0 {
            return bad("server.thumbnail_long_side must be at least 1");
        }
        if self.cluster.k == 0 {
            return bad("cluster.k must be at least 1");
        }
        self.resize.validate()
    }
}
