//! Exact cosine top-k over an insertion-ordered vector store, plus the
//! `DLVS` on-disk format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "DLVS" | version u16 | dim u32 | count u64
//! count x ( id_len u32 | id utf8
//!         | meta_len u32 | meta json
//!         | text_len u32 | text utf8
//!         | dim x f32 )
//! crc32c u32   -- over every preceding byte
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingVector;
use crate::ingest::{Chunk, ChunkMetadata};

pub const STORE_MAGIC: &[u8; 4] = b"DLVS";
pub const STORE_VERSION: u16 = 1;
pub const DEFAULT_TOP_K: usize = 4;

const HEADER_LEN: usize = 4 + 2 + 4 + 8;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("duplicate chunk id {0}")]
    DuplicateId(String),
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error("store checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Single pass accumulating the dot product and both squared norms; the
/// operation order is the same whichever argument comes first.
fn cosine_parts<A, B>(u: &[A], v: &[B]) -> (f64, f64, f64)
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    let mut dot = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (&a, &b) in u.iter().zip(v) {
        let (a, b): (f64, f64) = (a.into(), b.into());
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    (dot, uu, vv)
}

fn cosine_raw<A, B>(u: &[A], v: &[B]) -> Option<f64>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    let (dot, uu, vv) = cosine_parts(u, v);
    if uu == 0.0 || vv == 0.0 {
        return None;
    }
    Some((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, IndexError> {
    if u.dim() != v.dim() {
        return Err(IndexError::DimensionMismatch { expected: u.dim(), actual: v.dim() });
    }
    cosine_raw(u.components(), v.components()).ok_or(IndexError::ZeroVector)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreEntry {
    pub chunk_id: String,
    pub vector: Vec<f32>,
    pub metadata: ChunkMetadata,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub chunk_id: String,
    pub score: f64,
    pub rank: usize,
    /// Insertion position of the entry in the store.
    pub position: usize,
    pub metadata: ChunkMetadata,
    pub text: String,
}

/// Insertion-ordered collection of embedded chunks. Vectors are held at
/// 32-bit precision so a freshly built store and its reloaded copy rank
/// identically.
#[derive(Debug, Clone)]
pub struct VectorStore {
    dim: usize,
    entries: Vec<StoreEntry>,
    insertion_counter: u64,
    by_id: HashMap<String, usize>,
}

impl PartialEq for VectorStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.entries == other.entries && self.insertion_counter == other.insertion_counter
    }
}

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new(), insertion_counter: 0, by_id: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insertion_counter(&self) -> u64 {
        self.insertion_counter
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn get(&self, chunk_id: &str) -> Option<&StoreEntry> {
        self.by_id.get(chunk_id).map(|&i| &self.entries[i])
    }

    pub fn add(&mut self, chunk: &Chunk, vector: &EmbeddingVector) -> Result<String, IndexError> {
        self.add_entry(&chunk.chunk_id, chunk.metadata.clone(), &chunk.text, vector)
    }

    pub fn add_entry(
        &mut self,
        chunk_id: &str,
        metadata: ChunkMetadata,
        text: &str,
        vector: &EmbeddingVector,
    ) -> Result<String, IndexError> {
        if vector.dim() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, actual: vector.dim() });
        }
        if self.by_id.contains_key(chunk_id) {
            return Err(IndexError::DuplicateId(chunk_id.to_string()));
        }
        self.push(StoreEntry {
            chunk_id: chunk_id.to_string(),
            vector: vector.components().iter().map(|&c| c as f32).collect(),
            metadata,
            text: text.to_string(),
        });
        Ok(chunk_id.to_string())
    }

    fn push(&mut self, entry: StoreEntry) {
        self.by_id.insert(entry.chunk_id.clone(), self.entries.len());
        self.entries.push(entry);
        self.insertion_counter += 1;
    }

    /// The `min(k, N)` entries most similar to `query`. Ties go to the
    /// earlier insertion; zero-vector entries never appear.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalResult>, IndexError> {
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, actual: query.dim() });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let q = query.components();
        let mut scored: Vec<(f64, usize)> =
            self.entries.iter().enumerate().filter_map(|(i, e)| cosine_raw(q, &e.vector).map(|s| (s, i))).collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(r, (score, i))| {
                let e = &self.entries[i];
                RetrievalResult {
                    chunk_id: e.chunk_id.clone(),
                    score,
                    rank: r + 1,
                    position: i,
                    metadata: e.metadata.clone(),
                    text: e.text.clone(),
                }
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.entries.len() * (self.dim * 4 + 256));
        buf.extend_from_slice(STORE_MAGIC);
        buf.extend_from_slice(&STORE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            let meta = serde_json::to_vec(&e.metadata).expect("metadata serializes");
            put_bytes(&mut buf, e.chunk_id.as_bytes());
            put_bytes(&mut buf, &meta);
            put_bytes(&mut buf, e.text.as_bytes());
            for c in &e.vector {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
        let crc = crc32c::crc32c(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    /// Decodes a store. Structural problems (bad magic, version or
    /// truncation) are `CorruptStore`; a well-formed file whose checksum does
    /// not match is `ChecksumMismatch`. Contents are decoded only after the
    /// checksum passes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() < HEADER_LEN + 4 {
            return Err(IndexError::CorruptStore("file shorter than header".into()));
        }
        if &bytes[..4] != STORE_MAGIC {
            return Err(IndexError::CorruptStore("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != STORE_VERSION {
            return Err(IndexError::CorruptStore(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[10..18].try_into().unwrap());

        // walk the length prefixes first so truncation is reported as such
        let body_end = bytes.len() - 4;
        let mut cur = Cursor { buf: &bytes[..body_end], pos: HEADER_LEN };
        let mut spans = Vec::with_capacity(count.min(1 << 20) as usize);
        for i in 0..count {
            let id = cur.take_prefixed().ok_or_else(|| truncated(i))?;
            let meta = cur.take_prefixed().ok_or_else(|| truncated(i))?;
            let text = cur.take_prefixed().ok_or_else(|| truncated(i))?;
            let vec = cur.take(dim * 4).ok_or_else(|| truncated(i))?;
            spans.push((id, meta, text, vec));
        }
        if cur.pos != body_end {
            return Err(IndexError::CorruptStore(format!(
                "{} unexpected bytes after the last entry",
                body_end - cur.pos
            )));
        }

        let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
        let computed = crc32c::crc32c(&bytes[..body_end]);
        if stored != computed {
            return Err(IndexError::ChecksumMismatch { stored, computed });
        }

        let mut store = VectorStore::new(dim);
        for (id, meta, text, vec) in spans {
            let chunk_id = utf8(id, "chunk id")?;
            if store.by_id.contains_key(&chunk_id) {
                return Err(IndexError::CorruptStore(format!("duplicate chunk id {chunk_id}")));
            }
            let metadata: ChunkMetadata = serde_json::from_slice(meta)
                .map_err(|e| IndexError::CorruptStore(format!("metadata of {chunk_id}: {e}")))?;
            let text = utf8(text, "chunk text")?;
            let vector = vec.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            store.push(StoreEntry { chunk_id, vector, metadata, text });
        }
        Ok(store)
    }

    /// Writes via a sibling temp file and rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        tmp_name.push(".tmp");
        let tmp = path.with_file_name(tmp_name);
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn truncated(entry: u64) -> IndexError {
    IndexError::CorruptStore(format!("truncated in entry {entry}"))
}

fn utf8(bytes: &[u8], what: &str) -> Result<String, IndexError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| IndexError::CorruptStore(format!("{what} is not UTF-8")))
}

fn put_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(bytes);
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn take_prefixed(&mut self) -> Option<&'a [u8]> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().ok()?) as usize;
        self.take(len)
    }
}
