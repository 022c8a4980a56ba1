//! Tool endpoints: in-process mocks and remote HTTP services.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tog_core::graph::ToolSpec;
use tog_core::toolbox::{mock_output, MockInput};
use tog_core::{Resource, ResourceType};

use crate::config::{EndpointConfig, EngineConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolEndpoint {
    Local { latency: Duration, fail: bool },
    Remote { url: String, max_in_flight: usize },
}

impl From<&EndpointConfig> for ToolEndpoint {
    fn from(c: &EndpointConfig) -> Self {
        match c {
            EndpointConfig::Local { latency_ms, fail } => ToolEndpoint::Local {
                latency: Duration::from_millis(*latency_ms),
                fail: *fail,
            },
            EndpointConfig::Remote { url, max_in_flight } => ToolEndpoint::Remote {
                url: url.clone(),
                max_in_flight: *max_in_flight,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolResult {
    pub tool: String,
    pub output: Resource,
    pub elapsed: Duration,
}

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("tool `{tool}` failed: {reason}")]
    Execution { tool: String, reason: String },
    #[error("tool `{tool}` returned {found}, declared {expected}")]
    TypeMismatch {
        tool: String,
        expected: String,
        found: String,
    },
    #[error("writing {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// One resolved tool input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolInput {
    pub name: String,
    #[serde(rename = "type")]
    pub rtype: ResourceType,
    pub value: String,
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    tool: &'a str,
    inputs: &'a [ToolInput],
}

#[derive(Deserialize)]
struct RemoteResponse {
    output: RemoteOutput,
}

#[derive(Deserialize)]
struct RemoteOutput {
    #[serde(rename = "type")]
    rtype: String,
    value: String,
}

/// Counting semaphore per remote URL.
#[derive(Default)]
struct InFlight {
    counts: Mutex<BTreeMap<String, usize>>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self, url: &str, cap: usize) {
        let mut counts = self.counts.lock().expect("in-flight lock");
        loop {
            let n = counts.entry(url.to_owned()).or_insert(0);
            if *n < cap {
                *n += 1;
                return;
            }
            counts = self.freed.wait(counts).expect("in-flight lock");
        }
    }

    fn release(&self, url: &str) {
        let mut counts = self.counts.lock().expect("in-flight lock");
        if let Some(n) = counts.get_mut(url) {
            *n = n.saturating_sub(1);
        }
        self.freed.notify_all();
    }
}

/// Maps tool names to endpoints and invokes them. Media outputs are written
/// under `workspace` and reported by full path.
pub struct ToolRuntime {
    workspace: PathBuf,
    default: ToolEndpoint,
    endpoints: BTreeMap<String, ToolEndpoint>,
    http: reqwest::blocking::Client,
    in_flight: InFlight,
}

impl ToolRuntime {
    pub fn new(workspace: impl Into<PathBuf>, default: ToolEndpoint) -> Self {
        let workspace = workspace.into();
        let workspace = std::path::absolute(&workspace).unwrap_or(workspace);
        Self {
            workspace,
            default,
            endpoints: BTreeMap::new(),
            http: reqwest::blocking::Client::new(),
            in_flight: InFlight::default(),
        }
    }

    pub fn from_config(cfg: &EngineConfig) -> Self {
        let mut rt = Self::new(&cfg.workspace, ToolEndpoint::from(&cfg.default_endpoint));
        for (name, ep) in &cfg.endpoints {
            rt.set_endpoint(name, ToolEndpoint::from(ep));
        }
        rt
    }

    pub fn set_endpoint(&mut self, tool: &str, endpoint: ToolEndpoint) {
        self.endpoints.insert(tool.to_owned(), endpoint);
    }

    pub fn endpoint(&self, tool: &str) -> &ToolEndpoint {
        self.endpoints.get(tool).unwrap_or(&self.default)
    }

    pub fn workspace(&self) -> &Path {
        &self.workspace
    }

    /// A runtime with the same endpoints writing into `dir`.
    pub fn with_workspace(&self, dir: impl Into<PathBuf>) -> Self {
        let mut rt = Self::new(dir, self.default.clone());
        rt.endpoints = self.endpoints.clone();
        rt
    }

    pub fn invoke(
        &self,
        tool: &ToolSpec,
        inputs: &[ToolInput],
        output_id: &str,
    ) -> Result<ToolResult, ToolError> {
        let started = Instant::now();
        let (rtype, value) = match self.endpoint(&tool.name) {
            ToolEndpoint::Local { latency, fail } => {
                std::thread::sleep(*latency);
                if *fail {
                    return Err(ToolError::Execution {
                        tool: tool.name.clone(),
                        reason: "injected failure".into(),
                    });
                }
                (tool.ret.rtype.clone(), self.run_mock(tool, inputs)?)
            }
            ToolEndpoint::Remote { url, max_in_flight } => {
                self.in_flight.acquire(url, *max_in_flight);
                let res = self.call_remote(url, tool, inputs);
                self.in_flight.release(url);
                res?
            }
        };
        if rtype != tool.ret.rtype {
            return Err(ToolError::TypeMismatch {
                tool: tool.name.clone(),
                expected: tool.ret.rtype.to_string(),
                found: rtype.to_string(),
            });
        }
        Ok(ToolResult {
            tool: tool.name.clone(),
            output: Resource::new(output_id, rtype, value),
            elapsed: started.elapsed(),
        })
    }

    fn run_mock(&self, tool: &ToolSpec, inputs: &[ToolInput]) -> Result<String, ToolError> {
        let mock_inputs: Vec<MockInput<'_>> = inputs
            .iter()
            .map(|i| MockInput {
                name: &i.name,
                rtype: &i.rtype,
                value: &i.value,
            })
            .collect();
        let out = mock_output(tool, &mock_inputs);
        match out.payload {
            None => Ok(out.value),
            Some(bytes) => {
                let path = self.workspace.join(&out.value);
                let io = |source| ToolError::Io {
                    path: path.clone(),
                    source,
                };
                std::fs::create_dir_all(&self.workspace).map_err(io)?;
                std::fs::write(&path, bytes).map_err(io)?;
                Ok(path.to_string_lossy().into_owned())
            }
        }
    }

    fn call_remote(
        &self,
        url: &str,
        tool: &ToolSpec,
        inputs: &[ToolInput],
    ) -> Result<(ResourceType, String), ToolError> {
        let fail = |reason: String| ToolError::Execution {
            tool: tool.name.clone(),
            reason,
        };
        let resp = self
            .http
            .post(url)
            .json(&RemoteRequest {
                tool: &tool.name,
                inputs,
            })
            .send()
            .map_err(|e| fail(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(fail(format!("status {}", resp.status().as_u16())));
        }
        let body: RemoteResponse = resp.json().map_err(|e| fail(e.to_string()))?;
        if body.output.rtype != tool.ret.rtype.name() {
            return Err(ToolError::TypeMismatch {
                tool: tool.name.clone(),
                expected: tool.ret.rtype.to_string(),
                found: body.output.rtype,
            });
        }
        Ok((tool.ret.rtype.clone(), body.output.value))
    }
}
