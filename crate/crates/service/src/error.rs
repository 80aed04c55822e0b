use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use factaudit_core::auditor::AuditError;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("stale edit: {0}")]
    StaleEdit(String),
    #[error("payload too large: {0}")]
    PayloadTooLarge(String),
    #[error("cannot check sentence: {0}")]
    Unprocessable(String),
    #[error("backend error: {message}")]
    Backend { message: String, retriable: bool },
    #[error("corrupt session data: {0}")]
    Corrupt(String),
    #[error("storage: {0}")]
    Storage(#[from] std::io::Error),
    #[error("{} of the sentences could not be checked", .0.failed.len())]
    PartialFailure(Box<PartialFailure>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedSentence {
    pub index: usize,
    pub error: &'static str,
    pub message: String,
    pub retriable: bool,
}

/// Check-all outcome when some sentences failed. `partial` has the success
/// shape with `null` in place of each failed sentence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialFailure {
    pub failed: Vec<FailedSentence>,
    pub partial: serde_json::Value,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::StaleEdit(_) => "stale_edit",
            ServiceError::PayloadTooLarge(_) => "payload_too_large",
            ServiceError::Unprocessable(_) => "unprocessable",
            ServiceError::Backend { .. } => "backend_error",
            ServiceError::Corrupt(_) => "corrupt",
            ServiceError::Storage(_) => "storage",
            ServiceError::PartialFailure(_) => "partial_failure",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::StaleEdit(_) => StatusCode::CONFLICT,
            ServiceError::PayloadTooLarge(_) => StatusCode::PAYLOAD_TOO_LARGE,
            ServiceError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Backend { .. } | ServiceError::PartialFailure(_) => StatusCode::BAD_GATEWAY,
            ServiceError::Corrupt(_) | ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn retriable(&self) -> bool {
        match self {
            ServiceError::Backend { retriable, .. } => *retriable,
            ServiceError::PartialFailure(p) => p.failed.iter().all(|f| f.retriable),
            _ => false,
        }
    }

    pub fn body(&self) -> serde_json::Value {
        let mut body = json!({ "error": self.code(), "message": self.to_string(), "retriable": self.retriable() });
        if let ServiceError::PartialFailure(p) = self {
            body["failed"] = json!(p.failed);
            body["partial"] = p.partial.clone();
        }
        body
    }
}

impl From<AuditError> for ServiceError {
    fn from(e: AuditError) -> Self {
        match e.root() {
            AuditError::Backend(_) => ServiceError::Backend { retriable: e.is_retriable(), message: e.to_string() },
            AuditError::Text(_) | AuditError::InvalidConfig(_) => ServiceError::Unprocessable(e.to_string()),
            AuditError::Prompt(factaudit_core::promptio::PromptError::BudgetUnreachable { .. }) => {
                ServiceError::PayloadTooLarge(e.to_string())
            }
            _ => ServiceError::Backend { retriable: false, message: e.to_string() },
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}
