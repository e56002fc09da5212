use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use mstwin_core::ingest::{Location, ParseError};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid patient id {0:?}; want [A-Za-z0-9_-]{{1,64}}")]
    InvalidId(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Parse(ParseError),
    #[error("{0}")]
    MissingDependency(String),
    #[error("{context}: {message}")]
    Engine { context: String, message: String },
    #[error("{0}")]
    Unprocessable(String),
    #[error("store I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store document {path}: {message}")]
    Corrupt { path: String, message: String },
}

/// Wire form of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
}

impl ServiceError {
    pub fn engine(context: impl Into<String>, e: impl std::fmt::Display) -> Self {
        Self::Engine {
            context: context.into(),
            message: e.to_string(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::InvalidId(_) => "invalid_id",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Parse(_) => "parse_error",
            ServiceError::MissingDependency(_) => "missing_dependency",
            ServiceError::Engine { .. } => "engine_error",
            ServiceError::Unprocessable(_) => "unprocessable",
            ServiceError::Io(_) => "io_error",
            ServiceError::Corrupt { .. } => "corrupt_store",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::InvalidId(_) | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Parse(_)
            | ServiceError::MissingDependency(_)
            | ServiceError::Engine { .. }
            | ServiceError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Io(_) | ServiceError::Corrupt { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            error: self.code().into(),
            detail: match self {
                ServiceError::Parse(p) => p.message.clone(),
                other => other.to_string(),
            },
            location: match self {
                ServiceError::Parse(p) => p.location.clone(),
                _ => None,
            },
        }
    }
}

impl From<ParseError> for ServiceError {
    fn from(e: ParseError) -> Self {
        ServiceError::Parse(e)
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if matches!(self, ServiceError::Io(_) | ServiceError::Corrupt { .. }) {
            tracing::error!("{self}");
        }
        (self.status(), Json(self.body())).into_response()
    }
}
