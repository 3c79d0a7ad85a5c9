use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};

/// Error body `{code, message, detail}` with its HTTP status.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>, detail: Value) -> Self {
        Self { status, code, message: message.into(), detail }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message, Value::Null)
    }

    pub fn not_found(code: &'static str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, format!("no such id: {id}"), json!({ "id": id }))
    }

    pub fn conflict(code: &'static str, message: impl Into<String>, detail: Value) -> Self {
        Self::new(StatusCode::CONFLICT, code, message, detail)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, Value::Null)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}
