//! Conversational retrieval: embed the question, retrieve the top chunks,
//! stuff them with the conversation history into one prompt, and answer
//! through a chat-completion backend or the offline extractive responder.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{self, EmbedError, EmbedderConfig};
use crate::index::{IndexError, RetrievalResult, VectorStore, DEFAULT_TOP_K};
use crate::provider::{self, ProviderError};

pub const DEFAULT_MAX_TURNS: usize = 20;
pub const DEFAULT_STUB_SENTENCES: usize = 3;

pub const PROMPT_PREAMBLE: &str = "You are an assistant answering questions about an uploaded document. \
Answer using only the numbered excerpts below and the conversation so far. \
If the excerpts do not contain the answer, say that you do not know.";

#[derive(Debug, Error)]
pub enum ChainError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("no retrieved context to answer from")]
    NoContext,
    #[error("completion contained no answer")]
    EmptyCompletion,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("invalid chain config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

/// Bounded buffer of question/answer turns. Turns are only ever appended
/// in user/assistant pairs and evicted oldest pair first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationMemory {
    turns: Vec<ChatMessage>,
    max_turns: usize,
}

impl Default for ConversationMemory {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_TURNS)
    }
}

impl ConversationMemory {
    /// `max_turns` below 2 is raised to 2 so one exchange always fits.
    pub fn new(max_turns: usize) -> Self {
        Self { turns: Vec::new(), max_turns: max_turns.max(2) }
    }

    pub fn turns(&self) -> &[ChatMessage] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn max_turns(&self) -> usize {
        self.max_turns
    }

    pub fn push_exchange(&mut self, question: impl Into<String>, answer: impl Into<String>) {
        self.turns.push(ChatMessage::new(Role::User, question));
        self.turns.push(ChatMessage::new(Role::Assistant, answer));
        while self.turns.len() > self.max_turns {
            self.turns.drain(..2);
        }
    }

    pub fn clear(&mut self) {
        self.turns.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub source_id: String,
    pub chunk_id: String,
    pub source_key: String,
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatAnswer {
    pub text: String,
    pub sources: Vec<SourceRef>,
    pub retrieval: Vec<RetrievalResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmKind {
    Remote,
    ExtractiveStub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub kind: LlmKind,
    pub model_id: String,
    pub endpoint_url: String,
    pub temperature: f64,
    pub stub_sentence_count: usize,
    /// Falls back to `DOCLOOM_LLM_API_KEY` when unset.
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            kind: LlmKind::ExtractiveStub,
            model_id: String::new(),
            endpoint_url: String::new(),
            temperature: 0.0,
            stub_sentence_count: DEFAULT_STUB_SENTENCES,
            api_key: None,
        }
    }
}

impl LlmConfig {
    pub fn stub(sentences: usize) -> Self {
        Self { stub_sentence_count: sentences, ..Self::default() }
    }

    pub fn remote(endpoint_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self { kind: LlmKind::Remote, endpoint_url: endpoint_url.into(), model_id: model_id.into(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ChainError::InvalidConfig("temperature must be non-negative".into()));
        }
        if self.stub_sentence_count == 0 {
            return Err(ChainError::InvalidConfig("stub_sentence_count must be at least 1".into()));
        }
        if self.kind == LlmKind::Remote && self.endpoint_url.trim().is_empty() {
            return Err(ChainError::InvalidConfig("remote LLM requires endpoint_url".into()));
        }
        Ok(())
    }
}

/// Assembles the single "stuff" prompt: preamble, one `[S{rank}]` block per
/// retrieved chunk, the prior turns, then the new question. Sections are
/// separated by blank lines; empty sections are omitted.
pub fn build_prompt(history: &ConversationMemory, retrieved: &[RetrievalResult], question: &str) -> String {
    let mut blocks: Vec<String> = vec![PROMPT_PREAMBLE.to_string()];
    for r in retrieved {
        blocks.push(format!("[S{}] ({})\n{}", r.rank, r.metadata.source_key, r.text));
    }
    if !history.is_empty() {
        let lines: Vec<String> = history
            .turns()
            .iter()
            .map(|t| match t.role {
                Role::User => format!("User: {}", t.content),
                Role::Assistant => format!("Assistant: {}", t.content),
                Role::System => format!("System: {}", t.content),
            })
            .collect();
        blocks.push(lines.join("\n"));
    }
    blocks.push(format!("User: {question}"));
    blocks.join("\n\n")
}

/// Sentences of `text` with their byte offsets. A sentence ends at `.`,
/// `!` or `?` followed by whitespace or the end of the text; trailing text
/// without a terminator is a sentence of its own.
pub fn split_sentences(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let boundary = match chars.peek() {
            None => true,
            Some(&(_, next)) => next.is_whitespace(),
        };
        if boundary {
            let end = i + c.len_utf8();
            push_trimmed(&mut out, text, start, end);
            start = end;
        }
    }
    push_trimmed(&mut out, text, start, text.len());
    out
}

fn push_trimmed<'a>(out: &mut Vec<(usize, &'a str)>, text: &'a str, start: usize, end: usize) {
    let raw = &text[start..end];
    let trimmed = raw.trim();
    if !trimmed.is_empty() {
        let lead = raw.len() - raw.trim_start().len();
        out.push((start + lead, trimmed));
    }
}

struct Candidate<'a> {
    sentence: &'a str,
    score: f64,
    rank: usize,
    position: usize,
    offset: usize,
}

/// Offline stand-in for the LLM. Scores each retrieved sentence by
/// `|tokens(sentence) ∩ tokens(question)| / sqrt(token count)`, keeps the
/// best `n_sentences` (ties: earlier rank, then earlier offset) and joins
/// them in document order. Repeated sentences from overlapping chunks are
/// considered once.
pub fn extractive_respond(
    question: &str,
    retrieved: &[RetrievalResult],
    n_sentences: usize,
) -> Result<String, ChainError> {
    if n_sentences == 0 {
        return Err(ChainError::InvalidConfig("n_sentences must be at least 1".into()));
    }
    let q: HashSet<String> = embed::tokenize(question).into_inner().into_iter().collect();
    let mut ordered: Vec<&RetrievalResult> = retrieved.iter().collect();
    ordered.sort_by_key(|r| r.rank);

    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    for r in ordered {
        for (offset, sentence) in split_sentences(&r.text) {
            let tokens = embed::tokenize(sentence);
            if tokens.is_empty() || !seen.insert(sentence) {
                continue;
            }
            let distinct: HashSet<&String> = tokens.iter().collect();
            let overlap = distinct.iter().filter(|t| q.contains(t.as_str())).count();
            candidates.push(Candidate {
                sentence,
                score: overlap as f64 / (tokens.len() as f64).sqrt(),
                rank: r.rank,
                position: r.position,
                offset,
            });
        }
    }
    if candidates.is_empty() {
        return Err(ChainError::NoContext);
    }
    // stable: candidates are already in (rank, offset) order
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score));
    candidates.truncate(n_sentences);
    candidates.sort_by_key(|c| (c.position, c.offset, c.rank));
    Ok(candidates.iter().map(|c| c.sentence).collect::<Vec<_>>().join(" "))
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct CompletionResponse {
    #[serde(default)]
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: Option<CompletionMessage>,
}

#[derive(Deserialize)]
struct CompletionMessage {
    content: Option<String>,
}

pub fn remote_complete(messages: &[ChatMessage], config: &LlmConfig) -> Result<String, ChainError> {
    if config.kind != LlmKind::Remote {
        return Err(ChainError::InvalidConfig("remote_complete called with a non-remote config".into()));
    }
    config.validate()?;
    let key = provider::resolve_key(config.api_key.as_deref(), provider::LLM_API_KEY_VAR);
    let req = CompletionRequest { model: &config.model_id, temperature: config.temperature, messages };
    let resp: CompletionResponse = provider::post_json(&config.endpoint_url, key.as_deref(), &req)?;
    resp.choices
        .into_iter()
        .next()
        .and_then(|c| c.message)
        .and_then(|m| m.content)
        .filter(|c| !c.trim().is_empty())
        .ok_or(ChainError::EmptyCompletion)
}

/// One conversation bound to a read-only store.
#[derive(Debug, Clone)]
pub struct ChatSession {
    store: Arc<VectorStore>,
    embedder: EmbedderConfig,
    llm: LlmConfig,
    k: usize,
    memory: ConversationMemory,
}

impl ChatSession {
    pub fn new(store: Arc<VectorStore>, embedder: EmbedderConfig, llm: LlmConfig) -> Self {
        Self { store, embedder, llm, k: DEFAULT_TOP_K, memory: ConversationMemory::default() }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k.max(1);
        self
    }

    pub fn with_memory(mut self, memory: ConversationMemory) -> Self {
        self.memory = memory;
        self
    }

    pub fn memory(&self) -> &ConversationMemory {
        &self.memory
    }

    pub fn store(&self) -> &Arc<VectorStore> {
        &self.store
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Runs one question through the chain. Memory only changes when the
    /// whole turn succeeds.
    pub fn ask(&mut self, question: &str) -> Result<ChatAnswer, ChainError> {
        self.llm.validate()?;
        let query = embed::embed_texts(&[question.to_string()], &self.embedder)?
            .pop()
            .ok_or(ChainError::Embed(EmbedError::AllZero { index: Some(0) }))?;
        let retrieval = self.store.top_k(&query, self.k)?;
        let prompt = build_prompt(&self.memory, &retrieval, question);
        let text = match self.llm.kind {
            LlmKind::ExtractiveStub => extractive_respond(question, &retrieval, self.llm.stub_sentence_count)?,
            LlmKind::Remote => remote_complete(&[ChatMessage::new(Role::User, prompt)], &self.llm)?,
        };
        let sources = retrieval
            .iter()
            .map(|r| SourceRef {
                source_id: format!("S{}", r.rank),
                chunk_id: r.chunk_id.clone(),
                source_key: r.metadata.source_key.clone(),
                excerpt: r.text.clone(),
            })
            .collect();
        self.memory.push_exchange(question, text.clone());
        Ok(ChatAnswer { text, sources, retrieval })
    }
}
