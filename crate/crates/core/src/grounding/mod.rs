//! Image-to-description grounding with a persistent semantic cache.
//!
//! Grounding is an offline step: every item image is sent once to a
//! vision-language text-generation service and the returned description is
//! appended to `semantic_cache.jsonl`. Later runs (and retrieval) only read
//! the cache.

mod cache;
mod client;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use cache::{CacheStore, FailureRecord, SemanticCache, CACHE_FILE, FAILURES_FILE};
pub use client::{
    build_semantic_cache, BuildOutcome, Clock, Grounder, HttpGenerator, ImageRef, StubGenerator, TextGenerator,
    DEFAULT_MAX_TOKENS, DEFAULT_VLM_MODEL, STUB_MODEL,
};

/// Marker replaced by the image in the model's chat template.
pub const IMAGE_SLOT: &str = "<image>";
/// Placeholder in the template replaced by the comma-joined attribute focus.
pub const ATTRIBUTE_SLOT: &str = "{attributes}";

pub const DEFAULT_TEMPLATE: &str = "<image>\nWrite a detailed product description of the item shown, \
emphasizing its visual attributes ({attributes}) and the occasions it is appropriate for.";

#[derive(Debug, thiserror::Error)]
pub enum GroundingError {
    #[error("grounding service unavailable for {item_id}: {detail}")]
    GroundingUnavailable { item_id: String, detail: String },
    #[error("invalid image for {item_id}: {detail}")]
    InvalidImage { item_id: String, detail: String },
    #[error("service returned a blank description for {item_id}")]
    EmptyGeneration { item_id: String },
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("{path}:{line}: {detail}")]
    CacheParse { path: PathBuf, line: usize, detail: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingPrompt {
    pub template: String,
    pub attribute_focus: Vec<String>,
}

impl Default for GroundingPrompt {
    fn default() -> Self {
        Self {
            template: DEFAULT_TEMPLATE.to_string(),
            attribute_focus: ["color", "material", "style", "category", "occasion"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

impl GroundingPrompt {
    pub fn validate(&self) -> Result<(), GroundingError> {
        if self.template.trim().is_empty() {
            return Err(GroundingError::InvalidPrompt("template is empty".into()));
        }
        if !self.template.contains(IMAGE_SLOT) {
            return Err(GroundingError::InvalidPrompt(format!(
                "template lacks the {IMAGE_SLOT} marker"
            )));
        }
        Ok(())
    }

    /// Prompt text with the attribute list substituted.
    pub fn render(&self) -> String {
        self.template
            .replace(ATTRIBUTE_SLOT, &self.attribute_focus.join(", "))
    }

    /// Stable digest of (template, attribute focus, model id).
    pub fn hash(&self, model_id: &str) -> String {
        let mut buf = Vec::new();
        buf.extend_from_slice(self.template.as_bytes());
        buf.push(0x1f);
        buf.extend_from_slice(self.attribute_focus.join("\u{1e}").as_bytes());
        buf.push(0x1f);
        buf.extend_from_slice(model_id.as_bytes());
        crate::util::sha256_hex(&buf)
    }
}

/// One grounded description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionRecord {
    pub item_id: String,
    pub description: String,
    pub model_id: String,
    pub prompt_hash: String,
    /// Unix seconds.
    pub created_at: i64,
    /// Free-form model metadata, e.g. the quantization used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_note: Option<String>,
}
