//! Blocking JSON-over-HTTP plumbing shared by the remote embedder and the
//! remote chat-completion backend.

use std::sync::OnceLock;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub const EMBED_API_KEY_VAR: &str = "DOCLOOM_EMBED_API_KEY";
pub const LLM_API_KEY_VAR: &str = "DOCLOOM_LLM_API_KEY";

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("provider returned an invalid response: {0}")]
    InvalidResponse(String),
}

fn client() -> &'static reqwest::blocking::Client {
    static CLIENT: OnceLock<reqwest::blocking::Client> = OnceLock::new();
    CLIENT.get_or_init(|| {
        reqwest::blocking::Client::builder()
            .connect_timeout(Duration::from_secs(10))
            .timeout(Duration::from_secs(300))
            .build()
            .expect("HTTP client construction")
    })
}

/// Resolves the bearer token: explicit value first, then the environment.
pub(crate) fn resolve_key(explicit: Option<&str>, env_var: &str) -> Option<String> {
    explicit.map(str::to_string).or_else(|| std::env::var(env_var).ok()).filter(|k| !k.is_empty())
}

pub(crate) fn post_json<B, R>(url: &str, bearer: Option<&str>, body: &B) -> Result<R, ProviderError>
where
    B: Serialize + ?Sized,
    R: DeserializeOwned,
{
    let mut req = client().post(url).json(body);
    if let Some(token) = bearer {
        req = req.bearer_auth(token);
    }
    let resp = req.send().map_err(|e| ProviderError::Unreachable(e.to_string()))?;
    let status = resp.status();
    let text = resp.text().map_err(|e| ProviderError::Unreachable(e.to_string()))?;
    if !status.is_success() {
        return Err(ProviderError::Status { status: status.as_u16(), body: text });
    }
    serde_json::from_str(&text).map_err(|e| ProviderError::InvalidResponse(format!("{e}: {text}")))
}
