use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Processing state of an archival image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Captioned,
    Rejected,
    Embedded,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pending => "pending",
            Status::Captioned => "captioned",
            Status::Rejected => "rejected",
            Status::Embedded => "embedded",
        }
    }
}

/// An archival item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub source_path: String,
    pub title: String,
    pub metadata: BTreeMap<String, String>,
    pub width_px: u32,
    pub height_px: u32,
    pub status: Status,
    /// Present exactly when `status` is [`Status::Rejected`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection_reason: Option<String>,
}

impl ImageRecord {
    pub fn pending(
        id: impl Into<String>,
        source_path: impl Into<String>,
        width_px: u32,
        height_px: u32,
    ) -> Self {
        ImageRecord {
            id: id.into(),
            source_path: source_path.into(),
            title: String::new(),
            metadata: BTreeMap::new(),
            width_px,
            height_px,
            status: Status::Pending,
            rejection_reason: None,
        }
    }
}

/// The generated caption standing in for an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub image_id: String,
    pub text: String,
    /// Completion tokens as reported by the provider.
    pub token_count: u32,
    /// Whitespace-delimited words in `text`.
    pub word_count: u32,
    pub model_id: String,
    pub prompt_id: String,
}

impl Caption {
    /// Builds a caption, deriving `word_count` from the text.
    pub fn new(
        image_id: impl Into<String>,
        text: impl Into<String>,
        token_count: u32,
        model_id: impl Into<String>,
        prompt_id: impl Into<String>,
    ) -> Self {
        let text = text.into();
        Caption {
            image_id: image_id.into(),
            word_count: word_count(&text),
            text,
            token_count,
            model_id: model_id.into(),
            prompt_id: prompt_id.into(),
        }
    }

    /// Whether generation stopped at the configured token cap.
    pub fn hit_cap(&self, cap: u32) -> bool {
        self.token_count == cap
    }
}

pub fn word_count(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}
