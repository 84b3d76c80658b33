use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{scripted_plan, Plan, PlannerConfig};
use crate::error::{Error, Result};
use crate::sim::{Scenario, SimParams};

/// Chat-completion style service settings. The response text is located
/// with a JSON pointer so any service of that shape fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExternalConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_s: f64,
    pub max_retries: usize,
    pub response_pointer: String,
    /// Environment variable holding a bearer token, if any.
    pub api_key_env: Option<String>,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "default".into(),
            timeout_s: 60.0,
            max_retries: 3,
            response_pointer: "/choices/0/message/content".into(),
            api_key_env: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlannerBackend {
    Scripted,
    External(ExternalConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

/// Something that answers a conversation with completion text.
pub trait Transport {
    fn complete(&mut self, messages: &[Message]) -> Result<String>;
}

pub struct HttpTransport {
    cfg: ExternalConfig,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(cfg: ExternalConfig) -> Result<Self> {
        if !(cfg.timeout_s.is_finite() && cfg.timeout_s > 0.0) {
            return Err(Error::Config("timeout_s must be positive".into()));
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(cfg.timeout_s))
            .build();
        Ok(Self { cfg, agent })
    }
}

impl Transport for HttpTransport {
    fn complete(&mut self, messages: &[Message]) -> Result<String> {
        let body = json!({ "model": self.cfg.model, "messages": messages });
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(var) = &self.cfg.api_key_env {
            let key = std::env::var(var).map_err(|_| Error::Config(format!("environment variable {var} is not set")))?;
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let text = r.into_string().unwrap_or_default();
                return Err(Error::Planner(format!("service returned status {code}: {text}")));
            }
            Err(e) => return Err(Error::Planner(format!("request failed: {e}"))),
        };
        let v: Value = resp
            .into_json()
            .map_err(|e| Error::Planner(format!("response is not JSON: {e}")))?;
        v.pointer(&self.cfg.response_pointer)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Planner(format!("no text at {} in response", self.cfg.response_pointer)))
    }
}

/// Replays recorded replies in order, repeating the last one when the
/// recording runs out.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    replies: Vec<String>,
    next: usize,
    pub calls: usize,
}

const REPLY_SEPARATOR: &str = "--- reply ---";

/// Splits a transcript file into replies separated by `--- reply ---` lines.
pub fn parse_transcript(text: &str) -> Vec<String> {
    let mut replies = vec![String::new()];
    for line in text.lines() {
        if line.trim() == REPLY_SEPARATOR {
            replies.push(String::new());
        } else {
            let cur = replies.last_mut().expect("non-empty");
            cur.push_str(line);
            cur.push('\n');
        }
    }
    replies.retain(|r| !r.trim().is_empty());
    replies
}

impl ReplayTransport {
    pub fn new(replies: Vec<String>) -> Result<Self> {
        if replies.is_empty() {
            return Err(Error::contract("replay transport needs at least one reply"));
        }
        Ok(Self {
            replies,
            next: 0,
            calls: 0,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(parse_transcript(&std::fs::read_to_string(path)?))
    }
}

impl Transport for ReplayTransport {
    fn complete(&mut self, _messages: &[Message]) -> Result<String> {
        let r = self.replies[self.next.min(self.replies.len() - 1)].clone();
        self.next += 1;
        self.calls += 1;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryOutcome {
    pub plan: Plan,
    /// Re-requests made after the first reply.
    pub retries: usize,
    pub raw: String,
}

/// Requests a plan and re-requests with the parse error appended until a
/// reply parses or `max_retries` re-requests have failed. Transport
/// failures are not retried.
pub fn plan_with_retries(
    transport: &mut dyn Transport,
    prompt: &str,
    max_retries: usize,
    parse: impl Fn(&str) -> Result<Plan>,
) -> Result<RetryOutcome> {
    let mut messages = vec![Message::new("user", prompt)];
    let mut retries = 0;
    loop {
        let raw = transport.complete(&messages)?;
        match parse(&raw) {
            Ok(plan) => return Ok(RetryOutcome { plan, retries, raw }),
            Err(e) if retries < max_retries => {
                retries += 1;
                log::warn!("plan reply rejected ({e}); retry {retries} of {max_retries}");
                messages.push(Message::new("assistant", raw));
                messages.push(Message::new(
                    "user",
                    format!("Your reply could not be used: {e}. Reply again with only the JSON array."),
                ));
            }
            Err(e) => {
                return Err(Error::Planner(format!(
                    "no usable plan after {retries} retries: {e}; last reply: {raw}"
                )))
            }
        }
    }
}

/// Raw plan text from a backend: the scripted backend serializes its own
/// plan, the external one sends `prompt` once.
pub fn request_plan(
    backend: &PlannerBackend,
    prompt: &str,
    scenario: &Scenario,
    cfg: &PlannerConfig,
    sim: &SimParams,
) -> Result<String> {
    match backend {
        PlannerBackend::Scripted => Ok(scripted_plan(scenario, cfg, sim)?.serialize()),
        PlannerBackend::External(ext) => HttpTransport::new(ext.clone())?.complete(&[Message::new("user", prompt)]),
    }
}
