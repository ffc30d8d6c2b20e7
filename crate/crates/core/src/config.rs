//! Application configuration, read from one JSON file.
//!
//! ```json
//! {
//!   "store_path": "store",
//!   "adapters": {
//!     "segment": { "base_url": "http://127.0.0.1:8080", "mode": "live",
//!                  "fixture_dir": "fixtures", "timeout_ms": 30000, "retries": 2 },
//!     "propose": {}, "embed": {}, "generate": {}
//!   },
//!   "retrieval": { "tau": 0.75, "per_object_tau": {} },
//!   "prompt": { "template": null, "palette": null, "max_tokens": 512 }
//! }
//! ```
//!
//! Every key is optional. Relative paths are resolved against the directory
//! holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterEndpoint, AdapterError, ToolClient};
use crate::pipeline::{PipelineConfig, DEFAULT_MAX_TOKENS};
use crate::prompting::{self, ClauseTemplate, PaletteColor, PromptError};
use crate::retrieval::{RetrievalConfig, RetrievalError};

pub const CONFIG_ENV: &str = "PEKIT_CONFIG";
pub const DEFAULT_STORE_PATH: &str = "pekit-store";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config {}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("config: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("config: {0}")]
    Prompt(#[from] PromptError),
    #[error("config: prompt.max_tokens must be positive")]
    MaxTokens,
    #[error("config: {0}")]
    Adapter(#[from] AdapterError),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterSettings {
    pub segment: AdapterEndpoint,
    pub propose: AdapterEndpoint,
    pub embed: AdapterEndpoint,
    pub generate: AdapterEndpoint,
}

impl AdapterSettings {
    /// The same settings for all four endpoints.
    pub fn uniform(endpoint: AdapterEndpoint) -> Self {
        Self {
            segment: endpoint.clone(),
            propose: endpoint.clone(),
            embed: endpoint.clone(),
            generate: endpoint,
        }
    }

    fn iter_mut(&mut self) -> [&mut AdapterEndpoint; 4] {
        [&mut self.segment, &mut self.propose, &mut self.embed, &mut self.generate]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSettings {
    /// Clause template; the built-in one when absent.
    pub template: Option<String>,
    /// Box colors in slot order; the built-in palette when absent.
    pub palette: Option<Vec<PaletteColor>>,
    pub max_tokens: u32,
}

impl Default for PromptSettings {
    fn default() -> Self {
        Self {
            template: None,
            palette: None,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub store_path: PathBuf,
    pub adapters: AdapterSettings,
    pub retrieval: RetrievalConfig,
    pub prompt: PromptSettings,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            store_path: PathBuf::from(DEFAULT_STORE_PATH),
            adapters: AdapterSettings::default(),
            retrieval: RetrievalConfig::default(),
            prompt: PromptSettings::default(),
        }
    }
}

fn rebase(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl AppConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        rebase(base, &mut cfg.store_path);
        for a in cfg.adapters.iter_mut() {
            rebase(base, &mut a.fixture_dir);
        }
        Ok(cfg)
    }

    /// `explicit` if given, else `$PEKIT_CONFIG`, else defaults.
    pub fn discover(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig, ConfigError> {
        self.retrieval.validate()?;
        let template = match &self.prompt.template {
            Some(t) => ClauseTemplate::parse(t)?,
            None => ClauseTemplate::default(),
        };
        let palette = self.prompt.palette.clone().unwrap_or_else(prompting::default_palette);
        prompting::validate_palette(&palette)?;
        if self.prompt.max_tokens == 0 {
            return Err(ConfigError::MaxTokens);
        }
        Ok(PipelineConfig {
            retrieval: self.retrieval.clone(),
            template,
            palette,
            max_tokens: self.prompt.max_tokens,
        })
    }

    pub fn tools(&self) -> Result<ToolClient, ConfigError> {
        let a = &self.adapters;
        Ok(ToolClient::from_settings(&a.segment, &a.propose, &a.embed, &a.generate)?)
    }
}
