//! The provider abstraction the pipeline talks to.

use async_trait::async_trait;
use capsight_core::ImageRecord;

/// Outcome of one provider request.
///
/// `Rejected` is terminal (a content-policy refusal); `TransientError` is
/// retried under the [`RetryPolicy`](crate::RetryPolicy).
#[derive(Debug, Clone, PartialEq)]
pub enum ProviderResult<T> {
    Ok(T),
    Rejected(String),
    TransientError(String),
}

impl<T> ProviderResult<T> {
    pub fn is_ok(&self) -> bool {
        matches!(self, ProviderResult::Ok(_))
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> ProviderResult<U> {
        match self {
            ProviderResult::Ok(v) => ProviderResult::Ok(f(v)),
            ProviderResult::Rejected(r) => ProviderResult::Rejected(r),
            ProviderResult::TransientError(e) => ProviderResult::TransientError(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionOutput {
    pub text: String,
    /// Completion tokens spent on `text`.
    pub token_usage: u32,
}

#[derive(Debug, Clone)]
pub struct CaptionRequest<'a> {
    pub record: &'a ImageRecord,
    /// Resized JPEG; empty when the image source is a stub.
    pub image_jpeg: &'a [u8],
    pub prompt: &'a str,
    pub max_tokens: u32,
}

#[async_trait]
pub trait CaptionProvider: Send + Sync {
    fn model_id(&self) -> &str;

    async fn caption(&self, request: &CaptionRequest<'_>) -> ProviderResult<CaptionOutput>;
}

#[async_trait]
pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// Length of every vector this provider returns.
    fn dimension(&self) -> usize;

    async fn embed(&self, text: &str) -> ProviderResult<Vec<f32>>;
}
