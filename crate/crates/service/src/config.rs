use std::path::PathBuf;

use factaudit_core::auditor::DecodingConfig;
use factaudit_core::promptio::DEFAULT_INPUT_BUDGET;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Generation backend base URL.
    pub backend_url: Option<String>,
    /// Scripted backend file, used instead of `backend_url` for offline runs.
    pub mock_script: Option<PathBuf>,
    /// JSON `{"instruction": ...}`; the built-in instruction when unset.
    pub template_path: Option<PathBuf>,
    /// Session storage directory; sessions live in memory only when unset.
    pub data_dir: Option<PathBuf>,
    pub decoding: DecodingConfig,
    /// Input length budget in approximate tokens.
    pub input_budget: usize,
    /// Cut trailing sentences when dropping sections is not enough.
    pub hard_truncate: bool,
    pub max_payload_bytes: usize,
    /// Events between snapshot compactions.
    pub compact_every: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            backend_url: None,
            mock_script: None,
            template_path: None,
            data_dir: None,
            decoding: DecodingConfig::default(),
            input_budget: DEFAULT_INPUT_BUDGET,
            hard_truncate: true,
            max_payload_bytes: 4 * 1024 * 1024,
            compact_every: 64,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.input_budget == 0 {
            return Err(ServiceError::BadRequest("input_budget must be positive".into()));
        }
        if self.compact_every == 0 {
            return Err(ServiceError::BadRequest("compact_every must be positive".into()));
        }
        self.decoding.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))
    }
}
