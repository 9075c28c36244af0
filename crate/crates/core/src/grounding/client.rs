use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::cache::{CacheStore, FailureRecord};
use super::{DescriptionRecord, GroundingError, GroundingPrompt};
use crate::service::{post_json, CallError, EndpointConfig};

pub const DEFAULT_VLM_MODEL: &str = "llava-next-7b";
pub const STUB_MODEL: &str = "stub-v1";
pub const DEFAULT_MAX_TOKENS: u32 = 256;

/// Where an item image lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageRef {
    Url(String),
    Path(PathBuf),
}

impl ImageRef {
    pub fn parse(s: &str) -> Self {
        if s.starts_with("http://") || s.starts_with("https://") {
            Self::Url(s.to_string())
        } else {
            Self::Path(PathBuf::from(s))
        }
    }

    pub fn as_string(&self) -> String {
        match self {
            Self::Url(u) => u.clone(),
            Self::Path(p) => p.display().to_string(),
        }
    }
}

/// A vision-language text-generation backend.
pub trait TextGenerator: Send + Sync {
    fn model_id(&self) -> &str;

    /// Optional metadata copied into every record (e.g. quantization).
    fn model_note(&self) -> Option<String> {
        None
    }

    fn generate(&self, item_id: &str, prompt: &str, image: &ImageRef) -> Result<String, GroundingError>;
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_url: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_base64: Option<String>,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// HTTP client: `POST {model, prompt, image_url | image_base64, max_tokens}`
/// answered by `{text}`.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    pub endpoint: EndpointConfig,
    pub model: String,
    pub max_tokens: u32,
    pub note: Option<String>,
}

impl HttpGenerator {
    pub fn new(endpoint: EndpointConfig) -> Self {
        Self {
            endpoint,
            model: DEFAULT_VLM_MODEL.to_string(),
            max_tokens: DEFAULT_MAX_TOKENS,
            note: Some("4-bit quantization".to_string()),
        }
    }
}

impl TextGenerator for HttpGenerator {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn model_note(&self) -> Option<String> {
        self.note.clone()
    }

    fn generate(&self, item_id: &str, prompt: &str, image: &ImageRef) -> Result<String, GroundingError> {
        let (image_url, image_base64) = match image {
            ImageRef::Url(u) => (Some(u.as_str()), None),
            ImageRef::Path(p) => {
                let bytes = std::fs::read(p).map_err(|e| GroundingError::InvalidImage {
                    item_id: item_id.to_string(),
                    detail: format!("{}: {e}", p.display()),
                })?;
                (None, Some(base64::engine::general_purpose::STANDARD.encode(bytes)))
            }
        };
        let body = GenerateRequest {
            model: &self.model,
            prompt,
            image_url,
            image_base64,
            max_tokens: self.max_tokens,
        };
        let resp: GenerateResponse = post_json(&self.endpoint, &body).map_err(|e| match e {
            CallError::Rejected { status } => GroundingError::InvalidImage {
                item_id: item_id.to_string(),
                detail: format!("service responded {status}"),
            },
            other => GroundingError::GroundingUnavailable {
                item_id: item_id.to_string(),
                detail: other.to_string(),
            },
        })?;
        Ok(resp.text)
    }
}

const COLORS: &[&str] = &["black", "white", "navy", "red", "beige", "olive", "pink", "grey"];
const MATERIALS: &[&str] = &["cotton", "leather", "denim", "silk", "wool", "linen", "suede", "canvas"];
const STYLES: &[&str] = &["classic", "casual", "minimalist", "sporty", "vintage", "elegant", "bohemian"];
const CATEGORIES: &[&str] = &["dress", "sneaker", "boot", "handbag", "jacket", "necklace", "sandal", "watch"];
const OCCASIONS: &[&str] = &["everyday wear", "the office", "evening events", "weekend outings", "travel"];

/// Offline generator producing hash-seeded template sentences.
///
/// Counts every `generate` call so tests can assert cache behavior.
#[derive(Debug, Default)]
pub struct StubGenerator {
    canned: Option<String>,
    failing: Vec<String>,
    calls: AtomicUsize,
}

impl StubGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Always answer `text`.
    pub fn canned(text: impl Into<String>) -> Self {
        Self {
            canned: Some(text.into()),
            ..Self::default()
        }
    }

    /// Items listed here fail with `GroundingUnavailable` on every call.
    pub fn failing_for(mut self, items: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.failing = items.into_iter().map(Into::into).collect();
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn describe(item_id: &str, image: &str) -> String {
        let seed = crate::util::derive_seed(0, &format!("{item_id}\u{1f}{image}"));
        let pick = |list: &[&'static str], shift: u32| list[((seed >> shift) as usize) % list.len()];
        format!(
            "A {} {} {} in {}, made for {}.",
            pick(STYLES, 0),
            pick(COLORS, 8),
            pick(CATEGORIES, 16),
            pick(MATERIALS, 24),
            pick(OCCASIONS, 32),
        )
    }
}

impl TextGenerator for StubGenerator {
    fn model_id(&self) -> &str {
        STUB_MODEL
    }

    fn generate(&self, item_id: &str, _prompt: &str, image: &ImageRef) -> Result<String, GroundingError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.failing.iter().any(|f| f == item_id) {
            return Err(GroundingError::GroundingUnavailable {
                item_id: item_id.to_string(),
                detail: "stub configured to fail".into(),
            });
        }
        Ok(match &self.canned {
            Some(text) => text.clone(),
            None => Self::describe(item_id, &image.as_string()),
        })
    }
}

/// Source of `created_at` timestamps.
pub type Clock = fn() -> i64;

fn system_clock() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs() as i64)
}

/// Binds a generator to a prompt.
#[derive(Clone)]
pub struct Grounder {
    generator: Arc<dyn TextGenerator>,
    prompt: GroundingPrompt,
    prompt_hash: String,
    clock: Clock,
}

impl Grounder {
    pub fn new(generator: Arc<dyn TextGenerator>, prompt: GroundingPrompt) -> Result<Self, GroundingError> {
        prompt.validate()?;
        let prompt_hash = prompt.hash(generator.model_id());
        Ok(Self {
            generator,
            prompt,
            prompt_hash,
            clock: system_clock,
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn prompt_hash(&self) -> &str {
        &self.prompt_hash
    }

    pub fn prompt(&self) -> &GroundingPrompt {
        &self.prompt
    }

    /// Grounds one item, returning the cached record without calling the
    /// service when `(item_id, prompt_hash)` is already present.
    pub fn ground_item(
        &self,
        cache: &super::SemanticCache,
        item_id: &str,
        image_ref: &str,
    ) -> Result<DescriptionRecord, GroundingError> {
        if let Some(hit) = cache.get(item_id, &self.prompt_hash) {
            return Ok(hit.clone());
        }
        self.generate(item_id, image_ref)
    }

    fn generate(&self, item_id: &str, image_ref: &str) -> Result<DescriptionRecord, GroundingError> {
        let text = self
            .generator
            .generate(item_id, &self.prompt.render(), &ImageRef::parse(image_ref))?;
        let description = text.trim();
        if description.is_empty() {
            return Err(GroundingError::EmptyGeneration {
                item_id: item_id.to_string(),
            });
        }
        Ok(DescriptionRecord {
            item_id: item_id.to_string(),
            description: description.to_string(),
            model_id: self.generator.model_id().to_string(),
            prompt_hash: self.prompt_hash.clone(),
            created_at: (self.clock)(),
            model_note: self.generator.model_note(),
        })
    }
}

/// Summary of one cache build.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildOutcome {
    pub already_cached: usize,
    pub grounded: usize,
    pub failures: Vec<FailureRecord>,
}

/// Grounds every item not yet in `store`, with at most `parallelism`
/// requests in flight. Records are appended by this thread only, as they
/// arrive; per-item failures are collected and written to the sidecar.
pub fn build_semantic_cache(
    grounder: &Grounder,
    items: &[(String, String)],
    store: &mut CacheStore,
    parallelism: usize,
) -> Result<BuildOutcome, GroundingError> {
    let width = parallelism.max(1);
    let pending: Vec<&(String, String)> = items
        .iter()
        .filter(|(id, _)| store.cache().get(id, grounder.prompt_hash()).is_none())
        .collect();
    let mut outcome = BuildOutcome {
        already_cached: items.len() - pending.len(),
        ..BuildOutcome::default()
    };

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<DescriptionRecord, GroundingError>)>();
    let mut failures: Vec<(usize, FailureRecord)> = Vec::new();
    std::thread::scope(|scope| -> Result<(), GroundingError> {
        for _ in 0..width.min(pending.len()) {
            let tx = tx.clone();
            let next = &next;
            let pending = &pending;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((id, image)) = pending.get(i) else {
                    break;
                };
                if tx.send((i, grounder.generate(id, image))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, result) in rx {
            match result {
                Ok(record) => {
                    store.append(record)?;
                    outcome.grounded += 1;
                }
                Err(e) => {
                    log::warn!("grounding failed: {e}");
                    let (id, image) = pending[i];
                    failures.push((
                        i,
                        FailureRecord {
                            item_id: id.clone(),
                            image_ref: image.clone(),
                            error: e.to_string(),
                        },
                    ));
                }
            }
        }
        Ok(())
    })?;
    failures.sort_by_key(|(i, _)| *i);
    outcome.failures = failures.into_iter().map(|(_, f)| f).collect();
    store.write_failures(&outcome.failures)?;
    Ok(outcome)
}
