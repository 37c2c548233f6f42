use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Culture;
use crate::llm::BackendMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field} must be at least 1")]
    ZeroCount { field: &'static str },
    #[error("record mode needs backend_url")]
    NoBackendUrl,
    #[error("cultures must not be empty")]
    NoCultures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scenarios_per_norm: usize,
    /// Situations elaborated per scenario for each polarity.
    pub situations_per_scenario: usize,
    pub reviewers_per_item: usize,
    pub label_reviewers: usize,
    pub parallelism: usize,
    pub mode: BackendMode,
    /// Run norm augmentation and transfer as part of `advance`.
    pub stage0_enabled: bool,
    pub augment_count: usize,
    pub cultures: Vec<Culture>,
    pub generation_temperature: f64,
    pub label_temperature: f64,
    pub max_tokens: u32,
    pub backend_url: Option<String>,
    pub model: String,
    /// Environment variable holding the backend credential.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Completion cache; defaults to `completions.jsonl` in the store directory.
    pub cache_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scenarios_per_norm: 10,
            situations_per_scenario: 1,
            reviewers_per_item: 3,
            label_reviewers: 2,
            parallelism: 4,
            mode: BackendMode::Replay,
            stage0_enabled: false,
            augment_count: 10,
            cultures: vec![Culture::Chinese, Culture::American],
            generation_temperature: 1.0,
            label_temperature: 0.0,
            max_tokens: 1024,
            backend_url: None,
            model: "gpt-3.5-turbo".into(),
            api_key_env: "NORMLOOM_API_KEY".into(),
            timeout_secs: 120,
            cache_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, v) in [
            ("scenarios_per_norm", self.scenarios_per_norm),
            ("situations_per_scenario", self.situations_per_scenario),
            ("reviewers_per_item", self.reviewers_per_item),
            ("label_reviewers", self.label_reviewers),
            ("parallelism", self.parallelism),
            ("augment_count", self.augment_count),
            ("max_tokens", self.max_tokens as usize),
        ] {
            if v == 0 {
                return Err(ConfigError::ZeroCount { field });
            }
        }
        if self.cultures.is_empty() {
            return Err(ConfigError::NoCultures);
        }
        if self.mode == BackendMode::Record && self.backend_url.is_none() {
            return Err(ConfigError::NoBackendUrl);
        }
        Ok(())
    }
}
