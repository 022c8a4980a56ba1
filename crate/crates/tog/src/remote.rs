//! Chat-completion client and the language-model backed decomposer,
//! experts and responder.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use tog_core::decompose::{Decomposer, Subtask};
use tog_core::exec::{render_response_prompt, Action, Responder};
use tog_core::experts::{
    parse_assessment_reply, parse_binding_reply, parse_solution_score_reply, prompts,
    render_assessment_prompt, render_binding_prompt, render_ranking_prompt, BindingContext,
    Score, StepBinding, ToolAssessment,
};
use tog_core::graph::ToolSpec;
use tog_core::{Error, ExecutionReport, ResourceExpert, SolutionExpert, SolutionPath, ToolAssessor};

use crate::config::RemoteConfig;

/// Replies that fail to parse are re-requested this many times.
pub const PROTOCOL_RETRIES: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    #[error("request failed: {0}")]
    Transport(String),
    #[error("server returned status {0}")]
    Status(u16),
    #[error("unexpected response body: {0}")]
    Body(String),
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: String,
}

/// Minimal OpenAI-style chat-completion client.
#[derive(Debug, Clone)]
pub struct ChatClient {
    url: String,
    model: String,
    api_key: Option<String>,
    retries: usize,
    http: reqwest::blocking::Client,
}

impl ChatClient {
    /// The API key is read from the environment variable named in `cfg`.
    pub fn from_config(cfg: &RemoteConfig) -> Result<Self, ChatError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        Ok(Self {
            url: cfg.url.clone(),
            model: cfg.model.clone(),
            api_key: std::env::var(&cfg.api_key_env).ok(),
            retries: cfg.retries,
            http,
        })
    }

    /// Sends one exchange; transport failures and 5xx replies are retried.
    pub fn complete(&self, system: Option<&str>, user: &str) -> Result<String, ChatError> {
        let mut messages = Vec::new();
        if let Some(s) = system {
            messages.push(Message { role: "system", content: s });
        }
        messages.push(Message { role: "user", content: user });
        let body = json!({ "model": self.model, "messages": messages, "temperature": 0 });

        let mut last = ChatError::Transport("no attempt made".into());
        for attempt in 0..=self.retries {
            if attempt > 0 {
                log::warn!("retrying chat completion ({last})");
            }
            let mut req = self.http.post(&self.url).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last = ChatError::Transport(e.to_string());
                    continue;
                }
            };
            let status = resp.status();
            if status.is_server_error() {
                last = ChatError::Status(status.as_u16());
                continue;
            }
            if !status.is_success() {
                return Err(ChatError::Status(status.as_u16()));
            }
            let parsed: Completion = resp.json().map_err(|e| ChatError::Body(e.to_string()))?;
            return parsed
                .choices
                .into_iter()
                .next()
                .map(|c| c.message.content)
                .ok_or_else(|| ChatError::Body("no choices".into()));
        }
        Err(last)
    }
}

/// Asks repeatedly until `parse` accepts a reply.
fn ask<T>(
    client: &ChatClient,
    system: Option<&str>,
    prompt: &str,
    unavailable: fn(String) -> Error,
    parse: impl Fn(&str) -> tog_core::Result<T>,
) -> tog_core::Result<T> {
    let mut last = None;
    for _ in 0..=PROTOCOL_RETRIES {
        let reply = client
            .complete(system, prompt)
            .map_err(|e| unavailable(e.to_string()))?;
        match parse(&reply) {
            Ok(v) => return Ok(v),
            Err(e) => {
                log::warn!("rejected reply: {e}");
                last = Some(e);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

pub struct RemoteDecomposer {
    pub client: ChatClient,
    /// Tool names appended to the request when prior knowledge is on.
    pub tool_hints: Option<Vec<String>>,
}

impl Decomposer for RemoteDecomposer {
    fn decompose(&self, request: &str) -> tog_core::Result<String> {
        let user = match &self.tool_hints {
            Some(names) => format!("{request}\nAvailable tools: {}", names.join(", ")),
            None => request.to_owned(),
        };
        self.client
            .complete(Some(prompts::DECOMPOSE), &user)
            .map_err(|e| Error::DecompositionFailed {
                attempts: 1,
                last: e.to_string(),
            })
    }
}

pub struct RemoteAssessor {
    pub client: ChatClient,
}

impl ToolAssessor for RemoteAssessor {
    fn assess(&self, task: &Subtask, tool: &ToolSpec) -> tog_core::Result<ToolAssessment> {
        let prompt = render_assessment_prompt(task, tool);
        ask(&self.client, None, &prompt, Error::AssessorUnavailable, |r| {
            parse_assessment_reply(&tool.name, r)
        })
    }
}

pub struct RemoteSolutionExpert {
    pub client: ChatClient,
}

impl SolutionExpert for RemoteSolutionExpert {
    fn score_solutions(
        &self,
        task: &Subtask,
        request: &str,
        solutions: &[SolutionPath],
    ) -> tog_core::Result<Vec<(Score, String)>> {
        solutions
            .iter()
            .map(|s| {
                let prompt = render_ranking_prompt(task, request, s)?;
                ask(&self.client, None, &prompt, Error::ExpertUnavailable, parse_solution_score_reply)
            })
            .collect()
    }
}

pub struct RemoteResourceExpert {
    pub client: ChatClient,
}

impl ResourceExpert for RemoteResourceExpert {
    fn bind_step(&self, ctx: &BindingContext<'_>) -> tog_core::Result<StepBinding> {
        let prompt = render_binding_prompt(ctx);
        ask(&self.client, None, &prompt, Error::ExpertUnavailable, |r| {
            parse_binding_reply(r, ctx.tool, ctx.available)
        })
    }
}

pub struct RemoteResponder {
    pub client: ChatClient,
    pub assistant_name: String,
}

impl Responder for RemoteResponder {
    fn respond(
        &self,
        request: &str,
        _actions: &[Action],
        report: &ExecutionReport,
    ) -> tog_core::Result<String> {
        let prompt = render_response_prompt(&self.assistant_name, request, report);
        self.client
            .complete(None, &prompt)
            .map_err(|e| Error::ExpertUnavailable(e.to_string()))
    }
}
