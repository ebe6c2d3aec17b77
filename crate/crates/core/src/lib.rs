//! Conversational question answering over uploaded documents.
//!
//! The pipeline runs [`ingest`] (page extraction and overlapping chunking),
//! [`embed`] (remote or hashed sentence vectors), [`index`] (exact cosine
//! top-k with a checksummed store file) and [`chain`] (prompt assembly,
//! memory and answering). [`eval`] scores answers with ROUGE-1/2/L.

pub mod chain;
pub mod embed;
pub mod eval;
pub mod index;
pub mod ingest;
pub mod pipeline;
pub mod provider;

pub use chain::{ChatAnswer, ChatMessage, ChatSession, ConversationMemory, LlmConfig, LlmKind, Role, SourceRef};
pub use embed::{tokenize, EmbedderConfig, EmbedderKind, EmbeddingVector, TokenSequence};
pub use eval::{EvalRecord, EvalReport, RougeConfig, RougeScore};
pub use index::{cosine_similarity, RetrievalResult, VectorStore};
pub use ingest::{Chunk, ChunkMetadata, ChunkingParams, DocumentFormat, RawDocument};
pub use pipeline::PipelineConfig;
