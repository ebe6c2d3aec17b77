//! Glue from a raw document to a searchable store.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::LlmConfig;
use crate::embed::{self, EmbedError, EmbedderConfig, EmbedderKind, EmbeddingVector};
use crate::index::{IndexError, VectorStore, DEFAULT_TOP_K};
use crate::ingest::{self, Chunk, ChunkingParams, DocumentFormat, IngestError, RawDocument};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Everything needed to go from a document to an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub chunking: ChunkingParams,
    pub embedder: EmbedderConfig,
    pub llm: LlmConfig,
    pub k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            chunking: ChunkingParams::default(),
            embedder: EmbedderConfig::default(),
            llm: LlmConfig::default(),
            k: DEFAULT_TOP_K,
        }
    }
}

/// Embeds chunk texts. With the hashed embedder a chunk without tokens
/// gets a zero vector, which the store keeps but never retrieves.
pub fn embed_chunks(chunks: &[Chunk], config: &EmbedderConfig) -> Result<Vec<EmbeddingVector>, EmbedError> {
    config.validate()?;
    match config.kind {
        EmbedderKind::Hashed => chunks
            .iter()
            .map(|c| match embed::hashed_embed(&embed::tokenize(&c.text), config.dim) {
                Ok(v) => Ok(v),
                Err(EmbedError::AllZero { .. }) => Ok(EmbeddingVector::zeros(config.dim)),
                Err(e) => Err(e),
            })
            .collect(),
        EmbedderKind::Remote => {
            let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
            embed::remote_embed(&texts, config)
        }
    }
}

/// Chunks, embeds and indexes one document into a fresh store.
pub fn index_document(
    doc: &RawDocument,
    params: &ChunkingParams,
    embedder: &EmbedderConfig,
) -> Result<(Vec<Chunk>, VectorStore), PipelineError> {
    let chunks = ingest::chunk_document(doc, params)?;
    let vectors = embed_chunks(&chunks, embedder)?;
    let mut store = VectorStore::new(embedder.dim);
    for (chunk, vector) in chunks.iter().zip(&vectors) {
        store.add(chunk, vector)?;
    }
    Ok((chunks, store))
}

/// Reads a `.txt` or `.pdf` file from disk.
pub fn read_document(path: &Path, doc_id: &str) -> Result<RawDocument, IngestError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
    let format = DocumentFormat::from_file_name(&name)?;
    let bytes = std::fs::read(path)?;
    ingest::extract_text(&bytes, format, doc_id, name)
}

/// Document id derived from a file name: its stem with anything outside
/// `[A-Za-z0-9_-]` replaced by `_`.
pub fn doc_id_from_path(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("doc");
    let id: String =
        stem.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if id.is_empty() {
        "doc".to_string()
    } else {
        id
    }
}
