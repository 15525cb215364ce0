use std::path::Path;

use liquid_core::legacy_smoothing::SmoothError;
use liquid_core::smoothness_tuning::TuneError;
use liquid_core::synth::SynthError;
use liquid_core::{DataError, FitError};
use liquid_service::ApiError;
use serde_json::{json, Value};
use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{message}")]
    Config { code: String, message: String, detail: Value },
    #[error("{message}")]
    Numerical { code: String, message: String, detail: Value },
}

impl CliError {
    pub fn config(code: &str, message: impl Into<String>) -> Self {
        Self::Config {
            code: code.into(),
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Config {
            code: "IO".into(),
            message: format!("{}: {e}", path.display()),
            detail: json!({ "path": path }),
        }
    }

    pub fn json(path: &Path, e: serde_json::Error) -> Self {
        Self::Config {
            code: "INVALID_JSON".into(),
            message: format!("{}: {e}", path.display()),
            detail: json!({ "path": path, "line": e.line(), "column": e.column() }),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => EXIT_CONFIG,
            Self::Numerical { .. } => EXIT_NUMERICAL,
        }
    }

    pub fn to_json(&self) -> Value {
        let (code, message, detail) = match self {
            Self::Config { code, message, detail } | Self::Numerical { code, message, detail } => (code, message, detail),
        };
        json!({ "code": code, "message": message, "detail": detail, "exit_code": self.exit_code() })
    }
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        let body = e.body;
        // the service answers 422/500 for fits that break down numerically
        if e.status.as_u16() >= 422 {
            Self::Numerical {
                code: body.code,
                message: body.message,
                detail: body.detail,
            }
        } else {
            Self::Config {
                code: body.code,
                message: body.message,
                detail: body.detail,
            }
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        ApiError::from(e).into()
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        ApiError::from(e).into()
    }
}

impl From<TuneError> for CliError {
    fn from(e: TuneError) -> Self {
        ApiError::from(e).into()
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(m) => Self::config("INVALID_SYNTH_SPEC", m),
            SynthError::Data(d) => d.into(),
        }
    }
}

impl From<SmoothError> for CliError {
    fn from(e: SmoothError) -> Self {
        match e {
            SmoothError::Fit { name, source } => {
                let mut inner = CliError::from(source);
                let (Self::Config { message, .. } | Self::Numerical { message, .. }) = &mut inner;
                *message = format!("characteristic '{name}': {message}");
                inner
            }
            SmoothError::Model(m) => ApiError::from(m).into(),
            SmoothError::Data(d) => d.into(),
            other => Self::config("INVALID_SCORECARD", other.to_string()),
        }
    }
}
