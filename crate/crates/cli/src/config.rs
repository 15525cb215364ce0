use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use liquid_core::legacy_smoothing::StepScorecard;
use liquid_core::{ModelSpec, Pattern};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for Split {
    fn default() -> Self {
        Self {
            val_fraction: 0.3,
            seed: 0,
        }
    }
}

/// Configuration shared by `fit` and `tune`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    /// CSV path, relative to the config file.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
}

/// Configuration for `smooth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothConfig {
    pub schema_version: u32,
    pub scorecard: StepScorecard,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub lambda2: BTreeMap<String, f64>,
    #[serde(default)]
    pub patterns: BTreeMap<String, Pattern>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

pub fn check_schema(version: u32, path: &Path) -> Result<(), CliError> {
    if version != CONFIG_SCHEMA_VERSION {
        return Err(CliError::config(
            "UNSUPPORTED_SCHEMA",
            format!(
                "{}: schema_version {version} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                path.display()
            ),
        ));
    }
    Ok(())
}

/// `--data` wins over the config entry, which is relative to the config file.
pub fn resolve_data(flag: Option<&Path>, configured: Option<&Path>, config_path: &Path) -> Result<PathBuf, CliError> {
    if let Some(p) = flag {
        return Ok(p.to_path_buf());
    }
    let p = configured.ok_or_else(|| CliError::config("MISSING_DATA", "no dataset given (use --data or the config's data field)"))?;
    if p.is_absolute() {
        Ok(p.to_path_buf())
    } else {
        Ok(config_path.parent().unwrap_or(Path::new(".")).join(p))
    }
}
