use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use liquid_core::smoothness_tuning::TuneError;
use liquid_core::{DataError, FitError, ModelError};
use serde::Serialize;
use serde_json::{json, Value};

/// JSON error body returned by every failing endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                detail: Value::Null,
            },
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = detail;
        self
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "SESSION_NOT_FOUND", format!("no session '{id}'"))
            .with_detail(json!({ "session_id": id }))
    }

    pub fn unknown_characteristic(name: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "UNKNOWN_CHARACTERISTIC",
            format!("unknown characteristic '{name}'"),
        )
        .with_detail(json!({ "characteristic": name }))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<DataError> for ApiError {
    fn from(e: DataError) -> Self {
        let message = e.to_string();
        match e {
            DataError::MissingColumn(column) => {
                Self::bad_request("MISSING_COLUMN", message).with_detail(json!({ "column": column }))
            }
            DataError::TooManyRows { rows, cap } => {
                Self::bad_request("TOO_MANY_ROWS", message).with_detail(json!({ "rows": rows, "cap": cap }))
            }
            DataError::InvalidFraction(f) => {
                Self::bad_request("INVALID_SPLIT", message).with_detail(json!({ "val_fraction": f }))
            }
            _ => Self::bad_request("INVALID_DATA", message),
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnknownCharacteristic(name) => Self::unknown_characteristic(&name),
            ModelError::MissingColumn(column) => Self::bad_request("MISSING_COLUMN", format!("missing column '{column}'"))
                .with_detail(json!({ "column": column })),
            other => Self::bad_request("INVALID_SPEC", other.to_string()),
        }
    }
}

impl From<FitError> for ApiError {
    fn from(e: FitError) -> Self {
        let message = e.to_string();
        let unprocessable = |code: &str| Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message.clone());
        match e {
            FitError::Model(m) => m.into(),
            FitError::Data(d) => d.into(),
            FitError::Roughness(_) | FitError::NoCharacteristics => Self::bad_request("INVALID_SPEC", message),
            FitError::Record { row, .. } => {
                Self::bad_request("UNCOVERED_VALUE", message).with_detail(json!({ "row": row }))
            }
            FitError::InvalidOverride(_) => Self::bad_request("INVALID_OVERRIDE", message),
            FitError::DegenerateClasses(_) => unprocessable("DEGENERATE_CLASSES"),
            FitError::ZeroWeight => unprocessable("ZERO_WEIGHT"),
            FitError::DegenerateDirection => unprocessable("DEGENERATE_DIRECTION"),
            FitError::ZeroVariance => unprocessable("ZERO_VARIANCE"),
            FitError::ZeroDivergence => unprocessable("ZERO_DIVERGENCE"),
            FitError::Qp(_) => unprocessable("FIT_FAILED"),
        }
    }
}

impl From<TuneError> for ApiError {
    fn from(e: TuneError) -> Self {
        match e {
            TuneError::InvalidGrid(m) => Self::bad_request("INVALID_GRID", m),
            TuneError::Fit(f) => f.into(),
            TuneError::WithoutCharacteristic { name, source } => {
                let inner: ApiError = source.into();
                Self::new(
                    inner.status,
                    &inner.body.code,
                    format!("fit without '{name}' failed: {}", inner.body.message),
                )
                .with_detail(json!({ "characteristic": name }))
            }
            other => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "FIT_FAILED", other.to_string()),
        }
    }
}
