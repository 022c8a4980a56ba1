//! Engine configuration, read from a TOML file.
//!
//! Command-line flags override file values. Environment variables are only
//! consulted for secrets (the remote API key).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tog_core::SearchConfig;

use crate::error::TogError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecomposerBackend {
    Rule,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpertBackend {
    Mock,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponderBackend {
    Template,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RemoteConfig {
    /// Chat-completion endpoint URL.
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Transport retries per request.
    #[serde(default = "default_retries")]
    pub retries: usize,
}

fn default_key_env() -> String {
    "TOG_API_KEY".into()
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EndpointConfig {
    Local {
        #[serde(default, rename = "latency-ms")]
        latency_ms: u64,
        /// Injected failure, for testing failure handling.
        #[serde(default)]
        fail: bool,
    },
    Remote {
        url: String,
        #[serde(default = "default_in_flight", rename = "max-in-flight")]
        max_in_flight: usize,
    },
}

fn default_in_flight() -> usize {
    4
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig::Local {
            latency_ms: 0,
            fail: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct EngineConfig {
    /// Tool registry JSON; the built-in desk toolbox when unset.
    pub tool_registry: Option<PathBuf>,
    pub search: SearchConfig,
    pub decomposer: DecomposerBackend,
    pub experts: ExpertBackend,
    pub responder: ResponderBackend,
    pub prior_knowledge: bool,
    pub remote: Option<RemoteConfig>,
    pub default_endpoint: EndpointConfig,
    /// Per-tool endpoint overrides.
    pub endpoints: BTreeMap<String, EndpointConfig>,
    pub workspace: PathBuf,
    pub parallelism: usize,
    pub assistant_name: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            tool_registry: None,
            search: SearchConfig::default(),
            decomposer: DecomposerBackend::Rule,
            experts: ExpertBackend::Mock,
            responder: ResponderBackend::Template,
            prior_knowledge: false,
            remote: None,
            default_endpoint: EndpointConfig::default(),
            endpoints: BTreeMap::new(),
            workspace: PathBuf::from("tog-workspace"),
            parallelism: 4,
            assistant_name: "tog".into(),
        }
    }
}

impl EngineConfig {
    /// Reads `path`. Relative registry paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, TogError> {
        let text = std::fs::read_to_string(path).map_err(|e| TogError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let (Some(reg), Some(dir)) = (&cfg.tool_registry, path.parent()) {
            if reg.is_relative() {
                cfg.tool_registry = Some(dir.join(reg));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, TogError> {
        toml::from_str(text).map_err(|e| TogError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), TogError> {
        if self.parallelism == 0 {
            return Err(TogError::Config("parallelism must be at least 1".into()));
        }
        self.search
            .validate()
            .map_err(|e| TogError::Config(e.to_string()))?;
        if let Some(reg) = &self.tool_registry {
            if !reg.is_file() {
                return Err(TogError::Config(format!(
                    "tool registry {} does not exist",
                    reg.display()
                )));
            }
        }
        let needs_remote = self.decomposer == DecomposerBackend::Remote
            || self.experts == ExpertBackend::Remote
            || self.responder == ResponderBackend::Remote;
        if needs_remote && self.remote.is_none() {
            return Err(TogError::Config(
                "a remote backend is selected but [remote] is missing".into(),
            ));
        }
        for (name, ep) in std::iter::once(("default", &self.default_endpoint))
            .chain(self.endpoints.iter().map(|(k, v)| (k.as_str(), v)))
        {
            if let EndpointConfig::Remote { url, max_in_flight } = ep {
                if url.is_empty() || *max_in_flight == 0 {
                    return Err(TogError::Config(format!(
                        "endpoint `{name}` needs a url and max-in-flight >= 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn endpoint_for(&self, tool: &str) -> &EndpointConfig {
        self.endpoints.get(tool).unwrap_or(&self.default_endpoint)
    }
}
