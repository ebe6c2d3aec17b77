//! Document ingestion: page-wise text extraction and overlapping
//! character-window chunking with page/paragraph provenance.
//!
//! Chunk `n` (1-based) of a text of length `len` spans
//! `[(n - 1) * (size - overlap), min(start + size, len))`. Generation stops
//! after the chunk that reaches the end of the text. All offsets count
//! Unicode scalar values, never bytes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("document contains no extractable text")]
    EmptyDocument,
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("invalid chunking parameters: {0}")]
    InvalidParams(String),
    #[error("unsupported document type: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentFormat {
    PlainText,
    Pdf,
}

impl DocumentFormat {
    /// Picks a format from a file name's extension (`.txt` or `.pdf`).
    pub fn from_file_name(name: &str) -> Result<Self, IngestError> {
        let ext = Path::new(name).extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("txt") => Ok(Self::PlainText),
            Some("pdf") => Ok(Self::Pdf),
            _ => Err(IngestError::UnsupportedFormat(name.to_string())),
        }
    }
}

/// Extracted text of one document, one entry per physical page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub doc_id: String,
    pub source_name: String,
    pub pages: Vec<String>,
}

impl RawDocument {
    /// Concatenation of all pages; this is the text that gets chunked.
    pub fn full_text(&self) -> String {
        self.pages.concat()
    }

    fn page_lengths(&self) -> Vec<usize> {
        self.pages.iter().map(|p| p.chars().count()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkingParams {
    pub chunk_size: usize,
    pub chunk_overlap: usize,
}

impl Default for ChunkingParams {
    fn default() -> Self {
        Self { chunk_size: 1000, chunk_overlap: 100 }
    }
}

impl ChunkingParams {
    pub fn new(chunk_size: usize, chunk_overlap: usize) -> Result<Self, IngestError> {
        let params = Self { chunk_size, chunk_overlap };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.chunk_size == 0 {
            return Err(IngestError::InvalidParams("chunk_size must be at least 1".into()));
        }
        if self.chunk_overlap >= self.chunk_size {
            return Err(IngestError::InvalidParams(format!(
                "chunk_overlap ({}) must be smaller than chunk_size ({})",
                self.chunk_overlap, self.chunk_size
            )));
        }
        Ok(())
    }

    fn stride(&self) -> usize {
        self.chunk_size - self.chunk_overlap
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkMetadata {
    pub source_key: String,
    pub page: u32,
    pub paragraph: u32,
}

impl ChunkMetadata {
    pub fn new(page: u32, paragraph: u32) -> Self {
        Self { source_key: Self::key_for(page, paragraph), page, paragraph }
    }

    pub fn key_for(page: u32, paragraph: u32) -> String {
        format!("p{page}-pl{paragraph}")
    }
}

impl Default for ChunkMetadata {
    fn default() -> Self {
        Self::new(1, 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    /// Inclusive start, in characters.
    pub start_index: usize,
    /// Exclusive end, in characters.
    pub end_index: usize,
    pub metadata: ChunkMetadata,
}

pub fn chunk_id_for(doc_id: &str, n: usize) -> String {
    format!("{doc_id}-c{n}")
}

/// Splits `chunk_id` produced by [`chunk_id_for`] back into `(doc_id, n)`.
pub fn parse_chunk_id(chunk_id: &str) -> Option<(&str, usize)> {
    let (doc, n) = chunk_id.rsplit_once("-c")?;
    if doc.is_empty() || n.is_empty() || !n.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((doc, n.parse().ok()?))
}

/// Reads a document into pages. Plain text always yields a single page.
pub fn extract_text(
    bytes: &[u8],
    format: DocumentFormat,
    doc_id: impl Into<String>,
    source_name: impl Into<String>,
) -> Result<RawDocument, IngestError> {
    if bytes.is_empty() {
        return Err(IngestError::EmptyDocument);
    }
    let pages = match format {
        DocumentFormat::PlainText => {
            let text = std::str::from_utf8(bytes)
                .map_err(|e| IngestError::MalformedDocument(format!("invalid UTF-8: {e}")))?;
            vec![text.strip_prefix('\u{feff}').unwrap_or(text).to_string()]
        }
        DocumentFormat::Pdf => extract_pdf_pages(bytes)?,
    };
    if pages.iter().all(|p| p.is_empty()) {
        return Err(IngestError::EmptyDocument);
    }
    Ok(RawDocument { doc_id: doc_id.into(), source_name: source_name.into(), pages })
}

fn extract_pdf_pages(bytes: &[u8]) -> Result<Vec<String>, IngestError> {
    if !bytes.starts_with(b"%PDF") {
        return Err(IngestError::MalformedDocument("missing %PDF header".into()));
    }
    // the extractor panics on some malformed inputs
    let result = std::panic::catch_unwind(|| pdf_extract::extract_text_from_mem_by_pages(bytes));
    match result {
        Ok(Ok(pages)) if pages.is_empty() => Err(IngestError::EmptyDocument),
        Ok(Ok(pages)) => Ok(pages),
        Ok(Err(e)) => Err(IngestError::MalformedDocument(e.to_string())),
        Err(_) => Err(IngestError::MalformedDocument("PDF extractor aborted".into())),
    }
}

/// Byte offset of every char boundary in `text`, including `text.len()`.
fn char_boundaries(text: &str) -> Vec<usize> {
    text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len())).collect()
}

/// Character spans `[start, end)` of each chunk for a text of `len` chars.
pub fn chunk_spans(len: usize, params: &ChunkingParams) -> Result<Vec<(usize, usize)>, IngestError> {
    params.validate()?;
    let stride = params.stride();
    let mut spans = Vec::with_capacity(len / stride + 1);
    let mut start = 0;
    while start < len {
        let end = (start + params.chunk_size).min(len);
        spans.push((start, end));
        if end == len {
            break;
        }
        start += stride;
    }
    Ok(spans)
}

/// Sliding-window chunking of `text`. Metadata is left at page 1 /
/// paragraph 1 until [`assign_metadata`] runs.
pub fn chunk_text(doc_id: &str, text: &str, params: &ChunkingParams) -> Result<Vec<Chunk>, IngestError> {
    let bounds = char_boundaries(text);
    let len = bounds.len() - 1;
    let spans = chunk_spans(len, params)?;
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(i, (start, end))| Chunk {
            chunk_id: chunk_id_for(doc_id, i + 1),
            doc_id: doc_id.to_string(),
            text: text[bounds[start]..bounds[end]].to_string(),
            start_index: start,
            end_index: end,
            metadata: ChunkMetadata::default(),
        })
        .collect())
}

/// Character offsets (within a page) where each blank-line separated block
/// begins. A block begins at a non-blank line preceded by a blank line or by
/// the page start.
fn block_starts(page: &str) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut offset = 0;
    let mut prev_blank = true;
    for line in page.split('\n') {
        let blank = line.trim().is_empty();
        if !blank && prev_blank {
            starts.push(offset);
        }
        prev_blank = blank;
        offset += line.chars().count() + 1;
    }
    starts
}

/// Tags each chunk with the page holding its first character and the
/// paragraph (blank-line separated block) of that page it starts in.
pub fn assign_metadata(doc: &RawDocument, mut chunks: Vec<Chunk>) -> Vec<Chunk> {
    let lengths = doc.page_lengths();
    let mut page_ends = Vec::with_capacity(lengths.len());
    let mut acc = 0;
    for l in &lengths {
        acc += l;
        page_ends.push(acc);
    }
    let blocks: Vec<Vec<usize>> = doc.pages.iter().map(|p| block_starts(p)).collect();

    for chunk in &mut chunks {
        // first page whose end lies beyond the start offset
        let page_idx =
            page_ends.partition_point(|&end| end <= chunk.start_index).min(page_ends.len().saturating_sub(1));
        let page_start = page_ends[page_idx] - lengths[page_idx];
        let local = chunk.start_index.saturating_sub(page_start);
        let paragraph = blocks[page_idx].partition_point(|&s| s <= local).max(1);
        chunk.metadata = ChunkMetadata::new(page_idx as u32 + 1, paragraph as u32);
    }
    chunks
}

/// Extract-free convenience: chunk a document's full text and tag metadata.
pub fn chunk_document(doc: &RawDocument, params: &ChunkingParams) -> Result<Vec<Chunk>, IngestError> {
    let text = doc.full_text();
    if text.is_empty() {
        return Err(IngestError::EmptyDocument);
    }
    let chunks = chunk_text(&doc.doc_id, &text, params)?;
    Ok(assign_metadata(doc, chunks))
}

#[derive(Serialize)]
struct ChunkDumpLine<'a> {
    chunk_id: &'a str,
    doc_id: &'a str,
    start: usize,
    end: usize,
    source_key: &'a str,
    text: &'a str,
}

/// Writes the debugging dump: one JSON object per line.
pub fn write_chunks_jsonl<W: Write>(chunks: &[Chunk], mut out: W) -> std::io::Result<()> {
    for c in chunks {
        let line = ChunkDumpLine {
            chunk_id: &c.chunk_id,
            doc_id: &c.doc_id,
            start: c.start_index,
            end: c.end_index,
            source_key: &c.metadata.source_key,
            text: &c.text,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
