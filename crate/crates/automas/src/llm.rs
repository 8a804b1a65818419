//! Chat-completion reasoning engine.
//!
//! [`LlmEngine`] renders a prompt from the task, memory and latest
//! observation, sends it through a [`Transport`], and accepts the reply only
//! if it is exactly one JSON object of the action schema. Malformed replies
//! are retried with a repair instruction; once retries run out, or the
//! transport keeps failing, the wrapped rule engine decides instead and the
//! step is tagged `"fallback"`.
//!
//! Transports: [`HttpTransport`] for a live endpoint, [`RecordingTransport`]
//! to capture a transcript, [`ReplayTransport`] to serve one offline.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use automas_core::agent::{
    Action, Decision, EngineError, MemoryStore, Observation, ReasoningEngine, TaskSpec,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const FALLBACK_TAG: &str = "fallback";
pub const LLM_TAG: &str = "llm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_var")]
    pub api_key_env_var: String,
}

fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    2
}
fn default_key_var() -> String {
    "AUTOMAS_API_KEY".into()
}

impl ChatEndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Result<Self, LlmError> {
        let cfg = Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            timeout_s: default_timeout(),
            max_retries: default_retries(),
            api_key_env_var: default_key_var(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.base_url.trim().is_empty() {
            return Err(LlmError::Config("base_url must be nonempty".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(LlmError::Config("model_name must be nonempty".into()));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(LlmError::Config("timeout_s must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
    #[error("transport failed: {0}")]
    Transport(String),
    #[error("no recorded response for request {0}")]
    CacheMiss(String),
    #[error("malformed response body: {0}")]
    Body(String),
    #[error("transcript IO: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Hex SHA-256 of the request's JSON encoding; transcript key.
    pub fn hash(&self) -> String {
        let body = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&body))
    }
}

/// Sends a request and returns the raw response body.
pub trait Transport {
    fn send(&mut self, request: &ChatRequest) -> Result<String, LlmError>;
}

/// `choices[0].message.content` of a chat-completion response body.
pub fn extract_content(body: &str) -> Result<String, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Body(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::Body("missing choices[0].message.content".into()))
}

/// A response body carrying `content` as the first choice.
pub fn completion_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

#[derive(Debug)]
pub struct HttpTransport {
    config: ChatEndpointConfig,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(config: ChatEndpointConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(true)
            .build()
            .into();
        Ok(Self { config, agent })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl Transport for HttpTransport {
    fn send(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        let body = serde_json::to_string(request).map_err(|e| LlmError::Body(e.to_string()))?;
        let mut req = self
            .agent
            .post(&self.url())
            .header("Content-Type", "application/json");
        if let Ok(key) = std::env::var(&self.config.api_key_env_var) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        // errors carry the status or IO cause only, never request headers
        let mut resp = req
            .send(body.as_str())
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))
    }
}

/// Answers with the queued reply contents in order, then fails.
#[derive(Debug, Clone, Default)]
pub struct CannedTransport {
    replies: std::collections::VecDeque<String>,
    pub requests: Vec<ChatRequest>,
}

impl CannedTransport {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self {
            replies: replies.into_iter().map(Into::into).collect(),
            requests: Vec::new(),
        }
    }
}

impl Transport for CannedTransport {
    fn send(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        self.requests.push(request.clone());
        self.replies
            .pop_front()
            .map(|c| completion_body(&c))
            .ok_or_else(|| LlmError::Transport("canned replies exhausted".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_hash: String,
    pub request: ChatRequest,
    pub response: String,
}

/// Forwards to `inner` and appends every exchange to a JSON-lines file.
#[derive(Debug)]
pub struct RecordingTransport<T> {
    inner: T,
    path: PathBuf,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, path: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            path: path.into(),
        }
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        let response = self.inner.send(request)?;
        let entry = TranscriptEntry {
            request_hash: request.hash(),
            request: request.clone(),
            response: response.clone(),
        };
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        serde_json::to_writer(&mut f, &entry).map_err(|e| LlmError::Body(e.to_string()))?;
        f.write_all(b"\n")?;
        Ok(response)
    }
}

/// Serves recorded response bodies by request hash; anything unrecorded is
/// a [`LlmError::CacheMiss`].
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    responses: HashMap<String, String>,
}

impl ReplayTransport {
    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        Self {
            responses: entries
                .into_iter()
                .map(|e| (e.request_hash, e.response))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<TranscriptEntry>(l).map_err(|e| LlmError::Body(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn send(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        let key = request.hash();
        self.responses.get(&key).cloned().ok_or(LlmError::CacheMiss(key))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("reply is not a single JSON object: {0}")]
    NotJsonObject(String),
    #[error("reply object has no \"action\" key")]
    MissingAction,
    #[error("reply does not match the action schema: {0}")]
    Schema(String),
}

/// Accepts exactly one JSON object (surrounding whitespace allowed) whose
/// `"action"` is one of the four variants with exactly that variant's
/// fields.
pub fn parse_action(reply: &str) -> Result<Action, ParseError> {
    let value: Value = serde_json::from_str(reply).map_err(|e| ParseError::NotJsonObject(e.to_string()))?;
    let Value::Object(map) = &value else {
        return Err(ParseError::NotJsonObject("top level is not an object".into()));
    };
    if !map.get("action").is_some_and(Value::is_string) {
        return Err(ParseError::MissingAction);
    }
    serde_json::from_value(value).map_err(|e| ParseError::Schema(e.to_string()))
}

/// Versioned system prompt for one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub role_name: String,
    pub version: u32,
    pub system_text: String,
}

const ACTION_SCHEMA: &str = r#"Reply with exactly one JSON object and nothing else. Allowed forms:
{"action": "think", "rationale": "<text>"}
{"action": "finish", "result": {"algorithm": "<LS|ISTA|LMMSE|Linear>"}}
{"action": "invoke_tool", "tool_name": "<name>", "args": {}}
{"action": "send_message", "to_role": "<role>", "body": {}}"#;

const REPAIR_TEXT: &str =
    "Your previous reply did not follow the required format. Reply again with exactly one JSON object as specified.";

impl PromptTemplate {
    pub fn selector() -> Self {
        Self {
            role_name: automas_core::selector::SELECTOR_ROLE.into(),
            version: 1,
            system_text: "You select a channel estimation algorithm for a base station. \
                          The candidates are LS (no prior), ISTA (sparse angular structure), \
                          LMMSE (needs the channel covariance) and Linear (a filter learned from \
                          ground-truth samples). Think once about the environment, then finish \
                          with your choice. Never pick a class listed as excluded."
                .into(),
        }
    }

    /// System and user messages for one decision. Pure in its inputs.
    pub fn render(&self, task: &TaskSpec, memory: &MemoryStore, obs: &Observation) -> Vec<ChatMessage> {
        let mut system = format!("{}\n\nRole: {}\n", self.system_text, memory.role_definition);
        for k in &memory.domain_knowledge {
            system.push_str(&format!("- [{}] {}\n", k.tag, k.text));
        }
        system.push('\n');
        system.push_str(ACTION_SCHEMA);

        let mut user = format!("Task: {}\n", task.goal);
        for c in &task.constraints {
            user.push_str(&format!("Constraint: {c}\n"));
        }
        if let Some(o0) = memory.initial() {
            user.push_str(&describe_initial(o0));
        }
        for m in memory.received() {
            user.push_str(&format!("Message: {}\n", Value::Object(m.payload.clone())));
        }
        for (a, o) in memory.history() {
            user.push_str(&format!(
                "Step {}: you did {} -> {}\n",
                o.step,
                serde_json::to_string(a).unwrap_or_default(),
                Value::Object(o.payload.clone())
            ));
        }
        if obs.kind == automas_core::agent::ObservationKind::State {
            user.push_str(&format!(
                "Latest observation: {}\n",
                Value::Object(obs.payload.clone())
            ));
        }
        user.push_str("What is your next action?");
        vec![ChatMessage::new("system", system), ChatMessage::new("user", user)]
    }
}

fn describe_initial(o0: &Observation) -> String {
    let mut s = String::new();
    if let Some(intent) = &o0.user_intent {
        s.push_str(&format!("User intent: {intent}\n"));
    }
    if let Some(e) = &o0.environment {
        s.push_str(&format!(
            "Environment: location {}; carrier {} GHz; SNR {} dB; user speed {} m/s; {}\n",
            e.location, e.carrier_ghz, e.snr_db, e.speed_mps, e.obstruction_note
        ));
    }
    if let Some(r) = &o0.resources {
        s.push_str(&format!(
            "Resources: {} ground-truth channel samples; covariance {}; compute budget {:?}\n",
            r.samples_available,
            if r.covariance_available {
                "available"
            } else {
                "unavailable"
            },
            r.compute_budget
        ));
    }
    if !o0.payload.is_empty() {
        s.push_str(&format!("Details: {}\n", Value::Object(o0.payload.clone())));
    }
    s
}

/// Chat-completion engine with strict parsing and rule fallback.
pub struct LlmEngine<F> {
    config: ChatEndpointConfig,
    template: PromptTemplate,
    transport: Box<dyn Transport>,
    fallback: F,
    /// Transport or parse failures seen so far, newest last.
    pub failures: Vec<String>,
}

impl<F> std::fmt::Debug for LlmEngine<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmEngine")
            .field("config", &self.config)
            .field("template", &self.template.role_name)
            .field("failures", &self.failures.len())
            .finish_non_exhaustive()
    }
}

impl<F: ReasoningEngine> LlmEngine<F> {
    pub fn new(
        config: ChatEndpointConfig,
        template: PromptTemplate,
        transport: Box<dyn Transport>,
        fallback: F,
    ) -> Result<Self, LlmError> {
        config.validate()?;
        Ok(Self {
            config,
            template,
            transport,
            fallback,
            failures: Vec::new(),
        })
    }

    pub fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            model: self.config.model_name.clone(),
            messages,
            temperature: 0.0,
        }
    }
}

impl<F: ReasoningEngine> ReasoningEngine for LlmEngine<F> {
    fn decide(
        &mut self,
        task: &TaskSpec,
        memory: &MemoryStore,
        observation: &Observation,
    ) -> Result<Decision, EngineError> {
        let mut messages = self.template.render(task, memory, observation);
        for _ in 0..=self.config.max_retries {
            let request = self.request(messages.clone());
            let content = match self.transport.send(&request).and_then(|b| extract_content(&b)) {
                Ok(c) => c,
                Err(e) => {
                    self.failures.push(e.to_string());
                    continue;
                }
            };
            match parse_action(&content) {
                Ok(action) => {
                    return Ok(Decision {
                        action,
                        tag: Some(LLM_TAG.into()),
                    })
                }
                Err(e) => {
                    self.failures.push(e.to_string());
                    messages.push(ChatMessage::new("assistant", content));
                    messages.push(ChatMessage::new("user", REPAIR_TEXT));
                }
            }
        }
        let mut d = self.fallback.decide(task, memory, observation)?;
        d.tag = Some(FALLBACK_TAG.into());
        Ok(d)
    }
}
