use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::transport::Endpoint;

/// Agent configuration file (JSON):
///
/// ```json
/// {"role": "B", "protocol": "purchase.bspl", "system": "s1",
///  "agents": {"B": "127.0.0.1:9001", "S": "127.0.0.1:9002"}}
/// ```
///
/// `role` and `protocol` are optional here when given on the command line.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default)]
    pub role: Option<String>,
    #[serde(default)]
    pub protocol: Option<PathBuf>,
    pub system: String,
    pub agents: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl AgentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text)?;
        if config.system.is_empty() {
            return Err(ConfigError::Invalid("empty system id".into()));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        // A relative protocol path is relative to the config file.
        if let (Some(p), Some(dir)) = (&config.protocol, path.parent()) {
            if p.is_relative() {
                config.protocol = Some(dir.join(p));
            }
        }
        Ok(config)
    }

    pub fn peers(&self) -> BTreeMap<String, Endpoint> {
        self.agents
            .iter()
            .map(|(r, a)| (r.clone(), Endpoint(a.clone())))
            .collect()
    }

    pub fn address(&self, role: &str) -> Option<&str> {
        self.agents.get(role).map(String::as_str)
    }
}
