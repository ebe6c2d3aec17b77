//! Remote embedding and chat-completion clients against a local mock.

use std::sync::{Arc, Mutex};
use std::thread;

use docloom_core::chain::{self, ChainError, ChatMessage, ChatSession, LlmConfig, Role};
use docloom_core::embed::{self, EmbedError, EmbedderConfig};
use docloom_core::provider::ProviderError;
use docloom_core::{ChunkMetadata, VectorStore};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    body: Value,
    auth: Option<String>,
}

struct MockProvider {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

impl MockProvider {
    fn start<F>(handler: F) -> Self
    where
        F: Fn(&Value) -> (u16, String) + Send + 'static,
    {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/endpoint", server.server_addr().to_ip().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        thread::spawn(move || {
            for mut req in server.incoming_requests() {
                let mut raw = String::new();
                req.as_reader().read_to_string(&mut raw).unwrap();
                let body: Value = serde_json::from_str(&raw).unwrap_or(Value::Null);
                let auth = req.headers().iter().find(|h| h.field.equiv("Authorization")).map(|h| h.value.to_string());
                log.lock().unwrap().push(Seen { body: body.clone(), auth });
                let (status, text) = handler(&body);
                let resp = tiny_http::Response::from_string(text)
                    .with_status_code(status)
                    .with_header("Content-Type: application/json".parse::<tiny_http::Header>().unwrap());
                let _ = req.respond(resp);
            }
        });
        Self { url, seen }
    }

    fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

/// Embeds text `i` of each batch as a vector whose first component is the
/// text's length, returned in reverse index order.
fn length_embedder(dim: usize) -> impl Fn(&Value) -> (u16, String) {
    move |body| {
        let inputs = body["input"].as_array().unwrap();
        let mut data: Vec<Value> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut v = vec![0.0; dim];
                v[0] = t.as_str().unwrap().len() as f64;
                v[1] = 1.0;
                json!({"index": i, "embedding": v})
            })
            .collect();
        data.reverse();
        (200, json!({ "data": data }).to_string())
    }
}

#[test]
fn three_texts_in_order() {
    let mock = MockProvider::start(length_embedder(8));
    let mut cfg = EmbedderConfig::remote(&mock.url, 8);
    cfg.api_key = Some("secret".into());
    let texts: Vec<String> = ["a", "bbb", "cc"].iter().map(|s| s.to_string()).collect();
    let out = embed::remote_embed(&texts, &cfg).unwrap();
    let firsts: Vec<f64> = out.iter().map(|v| v.components()[0]).collect();
    assert_eq!(firsts, [1.0, 3.0, 2.0]);
    let reqs = mock.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].body["model"], "sentence-transformers/all-MiniLM-L6-v2");
    assert_eq!(reqs[0].body["input"], json!(["a", "bbb", "cc"]));
    assert_eq!(reqs[0].auth.as_deref(), Some("Bearer secret"));
}

#[test]
fn batches_of_sixty_four() {
    let mock = MockProvider::start(length_embedder(8));
    let cfg = EmbedderConfig::remote(&mock.url, 8);
    let texts: Vec<String> = (0..130).map(|i| "x".repeat(i + 1)).collect();
    let out = embed::remote_embed(&texts, &cfg).unwrap();
    assert_eq!(out.len(), 130);
    assert!(out.iter().enumerate().all(|(i, v)| v.components()[0] == (i + 1) as f64));
    let sizes: Vec<usize> = mock.requests().iter().map(|r| r.body["input"].as_array().unwrap().len()).collect();
    assert_eq!(sizes, [64, 64, 2]);
}

#[test]
fn wrong_length_is_dimension_mismatch() {
    let mock = MockProvider::start(length_embedder(8));
    let cfg = EmbedderConfig::remote(&mock.url, 16);
    let err = embed::remote_embed(&["a".to_string()], &cfg).unwrap_err();
    assert!(matches!(err, EmbedError::DimensionMismatch { expected: 16, actual: 8 }), "{err:?}");
}

#[test]
fn provider_status_surfaces_body() {
    let mock = MockProvider::start(|_| (503, "overloaded".to_string()));
    let cfg = EmbedderConfig::remote(&mock.url, 8);
    match embed::remote_embed(&["a".to_string()], &cfg).unwrap_err() {
        EmbedError::Provider(ProviderError::Status { status, body }) => {
            assert_eq!(status, 503);
            assert_eq!(body, "overloaded");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unreachable_provider() {
    // bind then drop to get a port nobody listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = EmbedderConfig::remote(format!("http://127.0.0.1:{port}/e"), 8);
    let err = embed::remote_embed(&["a".to_string()], &cfg).unwrap_err();
    assert!(matches!(err, EmbedError::Provider(ProviderError::Unreachable(_))), "{err:?}");
}

#[test]
fn embed_texts_remote_passthrough() {
    let fixed = json!({"data": [{"index": 0, "embedding": [0.5, -0.25, 0, 0, 0, 0, 0, 1]}]});
    let mock = MockProvider::start(move |_| (200, fixed.to_string()));
    let cfg = EmbedderConfig::remote(&mock.url, 8);
    let out = embed::embed_texts(&["q".to_string()], &cfg).unwrap();
    assert_eq!(out[0].components(), &[0.5, -0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
}

fn completion(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn completion_passthrough_and_wire_format() {
    let mock = MockProvider::start(|_| (200, completion("OK")));
    let mut cfg = LlmConfig::remote(&mock.url, "test-model");
    cfg.api_key = Some("k".into());
    let msgs = [ChatMessage::new(Role::System, "sys"), ChatMessage::new(Role::User, "hi")];
    assert_eq!(chain::remote_complete(&msgs, &cfg).unwrap(), "OK");
    let req = &mock.requests()[0];
    assert_eq!(
        req.body,
        json!({
            "model": "test-model",
            "temperature": 0.0,
            "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "hi"}]
        })
    );
    assert_eq!(req.auth.as_deref(), Some("Bearer k"));
}

#[test]
fn completion_server_error() {
    let mock = MockProvider::start(|_| (500, "boom".to_string()));
    let cfg = LlmConfig::remote(&mock.url, "m");
    let err = chain::remote_complete(&[ChatMessage::new(Role::User, "x")], &cfg).unwrap_err();
    assert!(
        matches!(err, ChainError::Provider(ProviderError::Status { status: 500, ref body }) if body == "boom"),
        "{err:?}"
    );
}

#[test]
fn completion_without_choices() {
    let mock = MockProvider::start(|_| (200, json!({"choices": []}).to_string()));
    let cfg = LlmConfig::remote(&mock.url, "m");
    let err = chain::remote_complete(&[ChatMessage::new(Role::User, "x")], &cfg).unwrap_err();
    assert!(matches!(err, ChainError::EmptyCompletion));
}

#[test]
fn ask_with_remote_llm_sends_stuffed_prompt() {
    let mock = MockProvider::start(|_| (200, completion("It is 42.")));
    let embedder = EmbedderConfig::hashed(64);
    let mut store = VectorStore::new(64);
    let text = "The zorvian constant equals 42.";
    let v = embed::hashed_embed(&embed::tokenize(text), 64).unwrap();
    store.add_entry("d-c1", ChunkMetadata::new(1, 1), text, &v).unwrap();
    let mut session = ChatSession::new(Arc::new(store), embedder, LlmConfig::remote(&mock.url, "m"));
    let answer = session.ask("zorvian constant?").unwrap();
    assert_eq!(answer.text, "It is 42.");
    assert_eq!(answer.sources[0].source_id, "S1");
    let prompt = mock.requests()[0].body["messages"][0]["content"].as_str().unwrap().to_string();
    assert!(prompt.contains("[S1] (p1-pl1)\nThe zorvian constant equals 42."));
    assert!(prompt.ends_with("User: zorvian constant?"));
    assert_eq!(session.memory().len(), 2);
}
