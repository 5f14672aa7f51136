use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown project '{0}'")]
    UnknownProject(String),
    #[error("unknown video '{video}' in project '{project}'")]
    UnknownVideo { project: String, video: String },
    #[error("unsupported frame rate {fps}: available rates are {available:?} (or integer divisors)")]
    UnsupportedRate { fps: f64, available: Vec<f64> },
    #[error("draft is for pass {found} but the video is in {state}")]
    WrongPass { state: String, found: u8 },
    #[error("revision conflict: expected {expected}, stored revision is {current}")]
    RevisionConflict { expected: u64, current: u64 },
    #[error("{0}")]
    Validation(String),
    #[error("project is incomplete: videos not DONE: {}", .0.join(", "))]
    IncompleteProject(Vec<String>),
    #[error("video '{0}' has no saved draft")]
    NoDraft(String),
    #[error("video '{0}' has no source file; only frame mode is available")]
    NoVideoFile(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("not found")]
    NotFound,
    #[error("project configuration: {0}")]
    Config(String),
    #[error("storage: {0}")]
    Storage(#[from] std::io::Error),
}

impl ServiceError {
    /// Stable machine-readable code returned to clients.
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownProject(_) => "UnknownProject",
            Self::UnknownVideo { .. } => "UnknownVideo",
            Self::UnsupportedRate { .. } => "UnsupportedRate",
            Self::WrongPass { .. } => "WrongPass",
            Self::RevisionConflict { .. } => "RevisionConflict",
            Self::Validation(_) => "ValidationError",
            Self::IncompleteProject(_) => "IncompleteProject",
            Self::NoDraft(_) => "NoDraft",
            Self::NoVideoFile(_) => "NoVideoFile",
            Self::BadRequest(_) => "BadRequest",
            Self::NotFound => "NotFound",
            Self::Config(_) => "ConfigError",
            Self::Storage(_) => "StorageError",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::UnknownProject(_)
            | Self::UnknownVideo { .. }
            | Self::NoVideoFile(_)
            | Self::NotFound => StatusCode::NOT_FOUND,
            Self::UnsupportedRate { .. } | Self::BadRequest(_) => StatusCode::BAD_REQUEST,
            Self::WrongPass { .. }
            | Self::RevisionConflict { .. }
            | Self::IncompleteProject(_)
            | Self::NoDraft(_) => StatusCode::CONFLICT,
            Self::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::Config(_) | Self::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = ErrorBody {
            code: self.code(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
