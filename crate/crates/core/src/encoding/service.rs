use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, EncodingError};
use crate::grounding::SemanticCache;
use crate::service::{post_json, CallError, EndpointConfig};
use crate::util::{derive_seed, seeded_rng};

pub const DEFAULT_BATCH_SIZE: usize = 64;
/// Output width of the stub encoder, matching MiniLM-class sentence encoders.
pub const STUB_DIM: usize = 384;

/// Maps a batch of texts to one vector each.
pub trait TextEncoder: Send + Sync {
    fn model_id(&self) -> &str;
    fn encode_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EncodingError>;
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EncodeResponse {
    vectors: Vec<Vec<f32>>,
}

/// Client for an embedding service speaking `POST {texts} -> {vectors}`.
#[derive(Debug, Clone)]
pub struct HttpEncoder {
    pub endpoint: EndpointConfig,
    pub model_id: String,
}

impl HttpEncoder {
    pub fn new(endpoint: EndpointConfig) -> Self {
        Self {
            endpoint,
            model_id: "all-MiniLM-L6-v2".to_string(),
        }
    }
}

impl TextEncoder for HttpEncoder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn encode_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EncodingError> {
        let resp: EncodeResponse =
            post_json(&self.endpoint, &EncodeRequest { texts }).map_err(|e| match e {
                CallError::Rejected { status } => {
                    EncodingError::EncodingUnavailable(format!("request rejected with status {status}"))
                }
                other => EncodingError::EncodingUnavailable(other.to_string()),
            })?;
        if resp.vectors.len() != texts.len() {
            return Err(EncodingError::EncodingUnavailable(format!(
                "service returned {} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        Ok(resp.vectors)
    }
}

/// Deterministic offline encoder: each lowercase word owns a seeded
/// Gaussian direction and a text embeds as the normalized sum over its
/// words, so texts sharing vocabulary land close together.
#[derive(Debug, Clone)]
pub struct StubEncoder {
    pub dim: usize,
}

impl Default for StubEncoder {
    fn default() -> Self {
        Self { dim: STUB_DIM }
    }
}

impl StubEncoder {
    pub fn encode_one(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        for word in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
        {
            let mut rng = seeded_rng(derive_seed(0x5eed, &word.to_lowercase()));
            for a in acc.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *a += z;
            }
        }
        super::normalize(&acc).into_iter().map(|x| x as f32).collect()
    }
}

impl TextEncoder for StubEncoder {
    fn model_id(&self) -> &str {
        "stub-encoder-v1"
    }

    fn encode_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EncodingError> {
        Ok(texts.iter().map(|t| self.encode_one(t)).collect())
    }
}

/// Embeds every cached description, one row per item in item-id order.
pub fn encode_descriptions(
    cache: &SemanticCache,
    encoder: &dyn TextEncoder,
    batch_size: usize,
) -> Result<EmbeddingTable, EncodingError> {
    if cache.is_empty() {
        return Err(EncodingError::EmptyInput);
    }
    let records: Vec<_> = cache.records().collect();
    let ids: Vec<String> = records.iter().map(|r| r.item_id.clone()).collect();
    let texts: Vec<String> = records.iter().map(|r| r.description.clone()).collect();
    let mut rows: Vec<Vec<f32>> = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch_size.max(1)) {
        rows.extend(encoder.encode_batch(chunk)?);
    }
    let dim = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * dim);
    for row in &rows {
        if row.len() != dim {
            return Err(EncodingError::DimMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        data.extend_from_slice(row);
    }
    let raw = ndarray::Array2::from_shape_vec((rows.len(), dim), data).expect("checked dims");
    EmbeddingTable::new(ids, raw)
}
