use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: ErrorBody,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session `{id}`"))
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message)
    }
}

impl From<infrasim::Error> for ApiError {
    fn from(e: infrasim::Error) -> Self {
        use infrasim::Error as E;
        let (status, code) = match &e {
            E::Parse { .. } => (StatusCode::BAD_REQUEST, "parse_error"),
            E::Config(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_scenario"),
            E::UnknownScenario { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_scenario"),
            E::UnknownPolicy(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_policy"),
            E::UnsupportedVersion { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "unsupported_version"),
            E::InvalidArgument(_) | E::Domain(_) | E::PolicyContract { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_request")
            }
            E::IllegalState(_) => (StatusCode::CONFLICT, "conflict"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorEnvelope {
            error: ErrorBody {
                code: self.code.to_string(),
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}
