use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use docloom_core::chain::DEFAULT_MAX_TURNS;
use docloom_core::index::DEFAULT_TOP_K;
use docloom_core::provider::{EMBED_API_KEY_VAR, LLM_API_KEY_VAR};
use docloom_core::{ChunkingParams, EmbedderConfig, LlmConfig, PipelineConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 50 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub listen: String,
    /// 0 binds a free port.
    pub port: u16,
    pub store_dir: PathBuf,
    pub k: usize,
    pub max_turns: usize,
    pub max_upload_bytes: usize,
    /// Allowed browser origins; `"*"` allows any.
    pub cors_origins: Vec<String>,
    pub chunking: ChunkingParams,
    pub embedder: EmbedderConfig,
    pub llm: LlmConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1".into(),
            port: 8080,
            store_dir: PathBuf::from("stores"),
            k: DEFAULT_TOP_K,
            max_turns: DEFAULT_MAX_TURNS,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            cors_origins: vec!["http://localhost:5173".into()],
            chunking: ChunkingParams::default(),
            embedder: EmbedderConfig::default(),
            llm: LlmConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: AppConfig = toml::from_str(text)?;
        cfg.apply_env();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    /// API keys come from the environment only.
    pub fn apply_env(&mut self) {
        if let Ok(k) = std::env::var(EMBED_API_KEY_VAR) {
            self.embedder.api_key = Some(k);
        }
        if let Ok(k) = std::env::var(LLM_API_KEY_VAR) {
            self.llm.api_key = Some(k);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        self.chunking.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.embedder.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.llm.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.socket_addr()?;
        Ok(())
    }

    pub fn socket_addr(&self) -> Result<SocketAddr, ConfigError> {
        format!("{}:{}", self.listen, self.port)
            .parse()
            .map_err(|e| ConfigError::Invalid(format!("listen address {}:{}: {e}", self.listen, self.port)))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig { chunking: self.chunking, embedder: self.embedder.clone(), llm: self.llm.clone(), k: self.k }
    }
}
