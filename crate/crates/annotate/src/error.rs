use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("corpus directory {0} does not exist")]
    MissingCorpus(PathBuf),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] slb_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = AnnotateError> = std::result::Result<T, E>;

impl IntoResponse for AnnotateError {
    fn into_response(self) -> Response {
        let status = match &self {
            AnnotateError::NotFound(_) => StatusCode::NOT_FOUND,
            AnnotateError::Validation(_) | AnnotateError::Core(slb_core::Error::Validation(_)) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"error": self.to_string()}))).into_response()
    }
}
