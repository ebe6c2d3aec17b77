//! HTTP+JSON facade over the retrieval chain.
//!
//! | method | path                            | body                 |
//! |--------|---------------------------------|----------------------|
//! | POST   | `/api/documents`                | multipart `file`     |
//! | POST   | `/api/sessions`                 | `{"doc_id"}`         |
//! | POST   | `/api/sessions/{id}/messages`   | `{"question"}`       |
//! | GET    | `/api/sessions/{id}/history`    |                      |
//! | GET    | `/api/chunks/{chunk_id}`        |                      |
//! | GET    | `/api/health`                   |                      |
//!
//! Stores are persisted under the configured store directory and reloaded
//! at startup; sessions live in memory only.

mod config;
mod error;

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use docloom_core::chain::{ChatMessage, ChatSession, ConversationMemory};
use docloom_core::ingest::{self, DocumentFormat};
use docloom_core::{pipeline, ChatAnswer, VectorStore};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::Mutex;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use config::{AppConfig, ConfigError, DEFAULT_MAX_UPLOAD_BYTES};
pub use error::{ApiError, ErrorBody};

pub const STORE_EXTENSION: &str = "dlvs";

struct Session {
    doc_id: String,
    created_at: u64,
    chat: ChatSession,
}

pub struct AppState {
    config: AppConfig,
    docs: RwLock<HashMap<String, Arc<VectorStore>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl AppState {
    /// Creates the store directory if needed and loads every store in it.
    pub fn open(config: AppConfig) -> std::io::Result<Self> {
        std::fs::create_dir_all(&config.store_dir)?;
        let mut docs = HashMap::new();
        for entry in std::fs::read_dir(&config.store_dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some(STORE_EXTENSION) {
                continue;
            }
            let Some(doc_id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            match VectorStore::load(&path) {
                Ok(store) => {
                    docs.insert(doc_id, Arc::new(store));
                }
                Err(e) => tracing::warn!("skipping store {}: {e}", path.display()),
            }
        }
        tracing::info!("loaded {} stores from {}", docs.len(), config.store_dir.display());
        Ok(Self { config, docs: RwLock::new(docs), sessions: RwLock::new(HashMap::new()) })
    }

    pub fn config(&self) -> &AppConfig {
        &self.config
    }

    pub fn document_count(&self) -> usize {
        self.docs.read().unwrap().len()
    }

    fn store_path(&self, doc_id: &str) -> PathBuf {
        self.config.store_dir.join(format!("{doc_id}.{STORE_EXTENSION}"))
    }

    fn doc(&self, doc_id: &str) -> Option<Arc<VectorStore>> {
        self.docs.read().unwrap().get(doc_id).cloned()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session_not_found", format!("no session {id}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadResponse {
    pub doc_id: String,
    pub source_name: String,
    pub chunk_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub doc_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session_id: String,
    pub doc_id: String,
    pub created_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MessageRequest {
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub session_id: String,
    pub doc_id: String,
    pub created_at: u64,
    pub turns: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkResponse {
    pub chunk_id: String,
    pub doc_id: String,
    pub source_key: String,
    pub page: u32,
    pub paragraph: u32,
    pub text: String,
}

type ApiResult<T> = Result<T, ApiError>;

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn upload_document(
    State(state): State<Arc<AppState>>,
    mut multipart: Multipart,
) -> ApiResult<(StatusCode, Json<UploadResponse>)> {
    let mut file = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        if field.name() != Some("file") {
            continue;
        }
        let name = field.file_name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(multipart_error)?;
        file = Some((name, bytes));
        break;
    }
    let (name, bytes) =
        file.ok_or_else(|| ApiError::bad_request("missing_file", "multipart field \"file\" is required"))?;
    let format = DocumentFormat::from_file_name(&name)?;
    let doc_id = uuid::Uuid::new_v4().simple().to_string();

    let worker = state.clone();
    let id = doc_id.clone();
    let (source_name, store) = tokio::task::spawn_blocking(move || -> ApiResult<(String, VectorStore)> {
        let doc = ingest::extract_text(&bytes, format, &id, &name)?;
        let cfg = &worker.config;
        let (_, store) = pipeline::index_document(&doc, &cfg.chunking, &cfg.embedder)?;
        store.save(worker.store_path(&id))?;
        Ok((doc.source_name, store))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;

    let chunk_count = store.len();
    state.docs.write().unwrap().insert(doc_id.clone(), Arc::new(store));
    tracing::info!("indexed {source_name} as {doc_id} ({chunk_count} chunks)");
    Ok((StatusCode::CREATED, Json(UploadResponse { doc_id, source_name, chunk_count })))
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", e.body_text())
    } else {
        ApiError::bad_request("invalid_upload", e.body_text())
    }
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    body.map(|Json(v)| v).map_err(|e| ApiError::bad_request("invalid_request", e.body_text()))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionResponse>)> {
    let req = json_body(body)?;
    let store = state
        .doc(&req.doc_id)
        .ok_or_else(|| ApiError::not_found("document_not_found", format!("no document {}", req.doc_id)))?;
    let cfg = &state.config;
    let chat = ChatSession::new(store, cfg.embedder.clone(), cfg.llm.clone())
        .with_k(cfg.k)
        .with_memory(ConversationMemory::new(cfg.max_turns));
    let session_id = uuid::Uuid::new_v4().simple().to_string();
    let created_at = unix_now();
    state
        .sessions
        .write()
        .unwrap()
        .insert(session_id.clone(), Arc::new(Mutex::new(Session { doc_id: req.doc_id.clone(), created_at, chat })));
    Ok((StatusCode::CREATED, Json(SessionResponse { session_id, doc_id: req.doc_id, created_at })))
}

/// Messages to one session are answered one at a time, in arrival order
/// (the session lock is a fair queue).
async fn post_message(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<MessageRequest>, JsonRejection>,
) -> ApiResult<Json<ChatAnswer>> {
    let session = state.session(&id)?;
    let req = json_body(body)?;
    let question = req.question.trim().to_string();
    if question.is_empty() {
        return Err(ApiError::bad_request("empty_question", "question must not be empty"));
    }
    let mut guard = session.lock_owned().await;
    let answer = tokio::task::spawn_blocking(move || guard.chat.ask(&question))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(answer))
}

async fn get_history(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<HistoryResponse>> {
    let session = state.session(&id)?;
    let guard = session.lock().await;
    Ok(Json(HistoryResponse {
        session_id: id,
        doc_id: guard.doc_id.clone(),
        created_at: guard.created_at,
        turns: guard.chat.memory().turns().to_vec(),
    }))
}

async fn get_chunk(State(state): State<Arc<AppState>>, Path(chunk_id): Path<String>) -> ApiResult<Json<ChunkResponse>> {
    let not_found = || ApiError::not_found("chunk_not_found", format!("no chunk {chunk_id}"));
    let (doc_id, _) = ingest::parse_chunk_id(&chunk_id).ok_or_else(not_found)?;
    let store = state.doc(doc_id).ok_or_else(not_found)?;
    let entry = store.get(&chunk_id).ok_or_else(not_found)?;
    Ok(Json(ChunkResponse {
        chunk_id: entry.chunk_id.clone(),
        doc_id: doc_id.to_string(),
        source_key: entry.metadata.source_key.clone(),
        page: entry.metadata.page,
        paragraph: entry.metadata.paragraph,
        text: entry.text.clone(),
    }))
}

async fn fallback() -> ApiError {
    ApiError::not_found("route_not_found", "no such endpoint")
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    if origins.iter().any(|o| o == "*") {
        return layer.allow_origin(Any);
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    layer.allow_origin(AllowOrigin::list(list))
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload_bytes;
    let cors = cors(&state.config.cors_origins);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/documents", post(upload_document))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/sessions/{id}/history", get(get_history))
        .route("/api/chunks/{chunk_id}", get(get_chunk))
        .fallback(fallback)
        .layer(DefaultBodyLimit::max(limit))
        .layer(cors)
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve<F>(listener: TcpListener, state: Arc<AppState>, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// A server running on its own thread and runtime; stops on drop.
pub struct BackgroundServer {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl BackgroundServer {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn start(config: AppConfig, addr: SocketAddr) -> std::io::Result<Self> {
        let state = Arc::new(AppState::open(config)?);
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = TcpListener::from_std(std_listener)?;
                serve(listener, state, async {
                    let _ = rx.await;
                })
                .await
            })
        });
        Ok(Self { addr, stop: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}
