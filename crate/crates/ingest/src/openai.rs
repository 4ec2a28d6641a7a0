//! Thin HTTP adapters for the OpenAI chat-completions and embeddings APIs.
//!
//! Only content-policy refusals map to `Rejected`. Every other failure
//! (network, rate limit, server error, authentication, malformed body) is
//! `TransientError`: the record stays pending and a later run retries it.

use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde_json::{json, Value};

use crate::config::{CaptionProviderConfig, EmbeddingProviderConfig};
use crate::provider::{
    CaptionOutput, CaptionProvider, CaptionRequest, EmbeddingProvider, ProviderResult,
};
use crate::IngestError;

const TIMEOUT: Duration = Duration::from_secs(120);

fn api_key(var: &str) -> Result<String, IngestError> {
    std::env::var(var).map_err(|_| IngestError::Config(format!("environment variable {var} is not set")))
}

fn client() -> Result<reqwest::Client, IngestError> {
    reqwest::Client::builder()
        .timeout(TIMEOUT)
        .build()
        .map_err(|e| IngestError::Config(format!("HTTP client: {e}")))
}

async fn post(client: &reqwest::Client, url: &str, key: &str, body: &Value) -> Result<(u16, String), String> {
    let resp = client
        .post(url)
        .bearer_auth(key)
        .json(body)
        .send()
        .await
        .map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let text = resp.text().await.map_err(|e| e.to_string())?;
    Ok((status, text))
}

fn is_policy_refusal(err: &Value) -> bool {
    let code = err.get("code").and_then(Value::as_str).unwrap_or_default();
    let message = err.get("message").and_then(Value::as_str).unwrap_or_default();
    code == "content_policy_violation" || message.contains("safety system")
}

fn error_result<T>(status: u16, body: &str) -> ProviderResult<T> {
    let parsed: Option<Value> = serde_json::from_str(body).ok();
    if let Some(err) = parsed.as_ref().and_then(|v| v.get("error")) {
        if is_policy_refusal(err) {
            let message = err.get("message").and_then(Value::as_str).unwrap_or("content policy refusal");
            return ProviderResult::Rejected(message.to_string());
        }
    }
    let snippet: String = body.chars().take(200).collect();
    ProviderResult::TransientError(format!("HTTP {status}: {snippet}"))
}

/// Interprets a chat-completions response.
pub fn parse_chat_response(status: u16, body: &str) -> ProviderResult<CaptionOutput> {
    if !(200..300).contains(&status) {
        return error_result(status, body);
    }
    let v: Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(e) => return ProviderResult::TransientError(format!("malformed response: {e}")),
    };
    let message = &v["choices"][0]["message"];
    if let Some(refusal) = message.get("refusal").and_then(Value::as_str) {
        return ProviderResult::Rejected(refusal.to_string());
    }
    let Some(text) = message.get("content").and_then(Value::as_str) else {
        return ProviderResult::TransientError("response has no message content".into());
    };
    if text.trim().is_empty() {
        return ProviderResult::TransientError("empty caption".into());
    }
    let token_usage = v["usage"]["completion_tokens"].as_u64().unwrap_or(0) as u32;
    ProviderResult::Ok(CaptionOutput {
        text: text.trim().to_string(),
        token_usage,
    })
}

/// Interprets an embeddings response.
pub fn parse_embedding_response(status: u16, body: &str) -> ProviderResult<Vec<f32>> {
    if !(200..300).contains(&status) {
        return error_result(status, body);
    }
    let v: Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(e) => return ProviderResult::TransientError(format!("malformed response: {e}")),
    };
    match v["data"][0]["embedding"].as_array() {
        Some(values) => {
            let out: Option<Vec<f32>> = values.iter().map(|x| x.as_f64().map(|f| f as f32)).collect();
            match out {
                Some(out) => ProviderResult::Ok(out),
                None => ProviderResult::TransientError("non-numeric embedding component".into()),
            }
        }
        None => ProviderResult::TransientError("response has no embedding".into()),
    }
}

pub struct OpenAiCaptionProvider {
    client: reqwest::Client,
    endpoint: String,
    model_id: String,
    api_key: String,
}

impl OpenAiCaptionProvider {
    pub fn from_config(cfg: &CaptionProviderConfig) -> Result<Self, IngestError> {
        Ok(OpenAiCaptionProvider {
            client: client()?,
            endpoint: cfg.endpoint.clone(),
            model_id: cfg.model_id.clone(),
            api_key: api_key(&cfg.api_key_env)?,
        })
    }

    pub fn request_body(&self, request: &CaptionRequest<'_>) -> Value {
        let b64 = base64::engine::general_purpose::STANDARD.encode(request.image_jpeg);
        json!({
            "model": self.model_id,
            "max_tokens": request.max_tokens,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": request.prompt},
                    {"type": "image_url", "image_url": {"url": format!("data:image/jpeg;base64,{b64}")}}
                ]
            }]
        })
    }
}

#[async_trait]
impl CaptionProvider for OpenAiCaptionProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    async fn caption(&self, request: &CaptionRequest<'_>) -> ProviderResult<CaptionOutput> {
        let body = self.request_body(request);
        match post(&self.client, &self.endpoint, &self.api_key, &body).await {
            Ok((status, text)) => parse_chat_response(status, &text),
            Err(e) => ProviderResult::TransientError(e),
        }
    }
}

pub struct OpenAiEmbeddingProvider {
    client: reqwest::Client,
    endpoint: String,
    model_id: String,
    api_key: String,
    dimension: usize,
}

impl OpenAiEmbeddingProvider {
    pub fn from_config(cfg: &EmbeddingProviderConfig) -> Result<Self, IngestError> {
        Ok(OpenAiEmbeddingProvider {
            client: client()?,
            endpoint: cfg.endpoint.clone(),
            model_id: cfg.model_id.clone(),
            api_key: api_key(&cfg.api_key_env)?,
            dimension: cfg.dimension,
        })
    }
}

#[async_trait]
impl EmbeddingProvider for OpenAiEmbeddingProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    async fn embed(&self, text: &str) -> ProviderResult<Vec<f32>> {
        let body = json!({"model": self.model_id, "input": text, "dimensions": self.dimension});
        match post(&self.client, &self.endpoint, &self.api_key, &body).await {
            Ok((status, text)) => parse_embedding_response(status, &text),
            Err(e) => ProviderResult::TransientError(e),
        }
    }
}
