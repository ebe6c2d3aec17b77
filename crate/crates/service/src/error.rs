use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use docloom_core::chain::ChainError;
use docloom_core::embed::EmbedError;
use docloom_core::index::IndexError;
use docloom_core::ingest::IngestError;
use docloom_core::pipeline::PipelineError;
use docloom_core::provider::ProviderError;
use serde::{Deserialize, Serialize};

/// Wire form of every error: `{"code", "message"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.code.to_string(), message: self.message };
        (self.status, Json(body)).into_response()
    }
}

fn provider(e: &ProviderError) -> ApiError {
    let code = match e {
        ProviderError::Unreachable(_) => "provider_unreachable",
        ProviderError::Status { .. } | ProviderError::InvalidResponse(_) => "provider_error",
    };
    ApiError::new(StatusCode::BAD_GATEWAY, code, e.to_string())
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let code = match &e {
            IngestError::EmptyDocument => "empty_document",
            IngestError::MalformedDocument(_) => "malformed_document",
            IngestError::UnsupportedFormat(_) => "unsupported_format",
            IngestError::InvalidParams(_) => "invalid_params",
            IngestError::Io(_) => return ApiError::internal(e.to_string()),
        };
        ApiError::bad_request(code, e.to_string())
    }
}

impl From<EmbedError> for ApiError {
    fn from(e: EmbedError) -> Self {
        match &e {
            EmbedError::Provider(p) => provider(p),
            EmbedError::DimensionMismatch { .. } => {
                ApiError::new(StatusCode::BAD_GATEWAY, "provider_error", e.to_string())
            }
            EmbedError::AllZero { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unembeddable_text", e.to_string())
            }
            EmbedError::InvalidConfig(_) => ApiError::internal(e.to_string()),
        }
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        ApiError::internal(e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Ingest(e) => e.into(),
            PipelineError::Embed(e) => e.into(),
            PipelineError::Index(e) => e.into(),
        }
    }
}

impl From<ChainError> for ApiError {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::Embed(e) => e.into(),
            ChainError::Index(e) => e.into(),
            ChainError::NoContext => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_context", e.to_string()),
            ChainError::EmptyCompletion => ApiError::new(StatusCode::BAD_GATEWAY, "empty_completion", e.to_string()),
            ChainError::Provider(p) => provider(&p),
            ChainError::InvalidConfig(_) => ApiError::internal(e.to_string()),
        }
    }
}
