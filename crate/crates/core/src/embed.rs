//! Text to vector conversion.
//!
//! Two backends sit behind [`embed_texts`]: a remote service speaking a small
//! JSON protocol, and a hashed bag-of-words embedder. The hashed embedder maps
//! every token to a signed one-hot vector (FNV-1a 64-bit bucket and sign),
//! mean-pools the token vectors and L2-normalizes the result.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{self, ProviderError};

pub const DEFAULT_DIM: usize = 384;
pub const DEFAULT_MODEL_ID: &str = "sentence-transformers/all-MiniLM-L6-v2";
pub const MIN_DIM: usize = 8;
pub const REMOTE_BATCH_SIZE: usize = 64;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid embedder config: {0}")]
    InvalidConfig(String),
    #[error("{}", match .index {
        Some(i) => format!("text {i} embeds to the zero vector"),
        None => "tokens embed to the zero vector".to_string(),
    })]
    AllZero { index: Option<usize> },
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Lowercase ASCII alphanumeric tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl std::ops::Deref for TokenSequence {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

/// Splits on every maximal run of characters outside `[A-Za-z0-9]` and
/// lowercases what remains.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence(
        text.split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| t.to_ascii_lowercase())
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    components: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Result<Self, EmbedError> {
        if components.is_empty() {
            return Err(EmbedError::InvalidConfig("embedding must have at least one component".into()));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(EmbedError::InvalidConfig("embedding has non-finite components".into()));
        }
        Ok(Self { components })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { components: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|&c| c == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { components: self.components.iter().map(|c| c * factor).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Remote,
    Hashed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub model_id: String,
    pub endpoint_url: String,
    /// Falls back to `DOCLOOM_EMBED_API_KEY` when unset.
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hashed,
            dim: DEFAULT_DIM,
            model_id: DEFAULT_MODEL_ID.to_string(),
            endpoint_url: String::new(),
            api_key: None,
        }
    }
}

impl EmbedderConfig {
    pub fn hashed(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn remote(endpoint_url: impl Into<String>, dim: usize) -> Self {
        Self { kind: EmbedderKind::Remote, dim, endpoint_url: endpoint_url.into(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim < MIN_DIM {
            return Err(EmbedError::InvalidConfig(format!("dim must be at least {MIN_DIM}, got {}", self.dim)));
        }
        if self.kind == EmbedderKind::Remote && self.endpoint_url.trim().is_empty() {
            return Err(EmbedError::InvalidConfig("remote embedder requires endpoint_url".into()));
        }
        Ok(())
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Bucket index and sign of a token's one-hot vector.
pub fn token_bucket(token: &str, dim: usize) -> (usize, f64) {
    let h = fnv1a64(token.as_bytes());
    let d = dim as u64;
    let bucket = (h % d) as usize;
    let sign = if (h / d) & 1 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

pub fn hashed_embed(tokens: &TokenSequence, dim: usize) -> Result<EmbeddingVector, EmbedError> {
    if dim < MIN_DIM {
        return Err(EmbedError::InvalidConfig(format!("dim must be at least {MIN_DIM}, got {dim}")));
    }
    if tokens.is_empty() {
        return Err(EmbedError::AllZero { index: None });
    }
    let mut sum = vec![0.0f64; dim];
    for t in tokens.iter() {
        let (bucket, sign) = token_bucket(t, dim);
        sum[bucket] += sign;
    }
    let n = tokens.len() as f64;
    let mean: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
    let norm = mean.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(EmbedError::AllZero { index: None });
    }
    Ok(EmbeddingVector { components: mean.into_iter().map(|c| c / norm).collect() })
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    index: usize,
    embedding: Vec<f64>,
}

/// Embeds `texts` through the remote service, at most
/// [`REMOTE_BATCH_SIZE`] texts per request. Output order follows input order.
pub fn remote_embed(texts: &[String], config: &EmbedderConfig) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if config.kind != EmbedderKind::Remote {
        return Err(EmbedError::InvalidConfig("remote_embed called with a non-remote config".into()));
    }
    config.validate()?;
    let key = provider::resolve_key(config.api_key.as_deref(), provider::EMBED_API_KEY_VAR);
    let mut out = Vec::with_capacity(texts.len());
    for batch in texts.chunks(REMOTE_BATCH_SIZE) {
        let req = EmbedRequest { model: &config.model_id, input: batch };
        let mut resp: EmbedResponse = provider::post_json(&config.endpoint_url, key.as_deref(), &req)?;
        if resp.data.len() != batch.len() {
            return Err(ProviderError::InvalidResponse(format!(
                "expected {} embeddings, got {}",
                batch.len(),
                resp.data.len()
            ))
            .into());
        }
        resp.data.sort_by_key(|d| d.index);
        for (expected_index, datum) in resp.data.into_iter().enumerate() {
            if datum.index != expected_index {
                return Err(
                    ProviderError::InvalidResponse(format!("unexpected embedding index {}", datum.index)).into()
                );
            }
            if datum.embedding.len() != config.dim {
                return Err(EmbedError::DimensionMismatch { expected: config.dim, actual: datum.embedding.len() });
            }
            let v = EmbeddingVector::new(datum.embedding)
                .map_err(|_| ProviderError::InvalidResponse("non-finite embedding component".into()))?;
            out.push(v);
        }
    }
    Ok(out)
}

pub fn embed_texts(texts: &[String], config: &EmbedderConfig) -> Result<Vec<EmbeddingVector>, EmbedError> {
    config.validate()?;
    match config.kind {
        EmbedderKind::Hashed => texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                hashed_embed(&tokenize(t), config.dim).map_err(|e| match e {
                    EmbedError::AllZero { .. } => EmbedError::AllZero { index: Some(i) },
                    other => other,
                })
            })
            .collect(),
        EmbedderKind::Remote if texts.is_empty() => Ok(Vec::new()),
        EmbedderKind::Remote => remote_embed(texts, config),
    }
}
