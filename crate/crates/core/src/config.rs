//! JSON runtime configuration. Every key is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ThresholdError, Thresholds};

pub const DEFAULT_TICK_MS: u64 = 500;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("labeling_thresholds: {0}")]
    Labeling(ThresholdError),
    #[error("control_thresholds: {0}")]
    Control(ThresholdError),
    #[error("tick_ms must be positive")]
    ZeroTick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub labeling_thresholds: Thresholds,
    pub control_thresholds: Thresholds,
    pub tick_ms: u64,
    pub store_path: PathBuf,
    /// HTTP API address.
    pub listen_addr: String,
    /// Newline-delimited JSON ingest socket.
    pub ingest_addr: String,
    /// Trained tree to load at startup; when absent a tree is fit on clean
    /// synthetic data.
    pub model_path: Option<PathBuf>,
    /// One JSON line per control tick; `null` disables the file.
    pub audit_path: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            labeling_thresholds: Thresholds::LABELING,
            control_thresholds: Thresholds::CONTROL,
            tick_ms: DEFAULT_TICK_MS,
            store_path: PathBuf::from("floc-telemetry.jsonl"),
            listen_addr: "127.0.0.1:8080".to_string(),
            ingest_addr: "127.0.0.1:7878".to_string(),
            model_path: None,
            audit_path: Some(PathBuf::from("floc-audit.jsonl")),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Config::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.labeling_thresholds.validate().map_err(ConfigError::Labeling)?;
        self.control_thresholds.validate().map_err(ConfigError::Control)?;
        if self.tick_ms == 0 {
            return Err(ConfigError::ZeroTick);
        }
        Ok(())
    }
}
