//! JSON config file. Every field is optional; command-line flags win.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model_path: Option<PathBuf>,
    pub listen_address: Option<String>,
    pub retrain_period: Option<u32>,
    pub data_source: Option<PathBuf>,
    pub log_level: Option<String>,
    pub poll_interval_ms: Option<u64>,
    pub method: Option<String>,
    pub order: Option<Vec<String>>,
    pub r: Option<f64>,
    pub variance_floor: Option<f64>,
    pub lambda: Option<f64>,
    pub train_window_days: Option<i64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            CliError::usage(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::usage(format!("invalid config `{}`: {e}", path.display())))
    }
}

/// Settings of the online phase after merging file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ServeConfig {
    pub model_path: PathBuf,
    pub listen_address: String,
    pub retrain_period: u32,
    pub data_source: Option<PathBuf>,
    pub log_level: String,
    pub poll_interval_ms: u64,
}

impl ServeConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.retrain_period < 1 {
            return Err(CliError::usage("retrain period must be at least 1 day"));
        }
        if self.poll_interval_ms == 0 {
            return Err(CliError::usage("poll interval must be positive"));
        }
        Ok(())
    }
}
