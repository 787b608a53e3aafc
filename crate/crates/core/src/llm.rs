//! Chat-completion backends: an HTTP client for the common
//! chat-completions wire shape and a scripted replay backend.

use std::collections::VecDeque;
use std::ops::{Add, AddAssign};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

impl Add for Usage {
    type Output = Usage;

    fn add(self, rhs: Usage) -> Usage {
        Usage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

impl AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Usage {
    fn sum<I: Iterator<Item = Usage>>(iter: I) -> Usage {
        iter.fold(Usage::default(), Add::add)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, backoff_base_ms: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Base URL or full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    /// Sends `response_format` with every request when on.
    pub json_constraint: bool,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: String::new(),
            model: "default".into(),
            temperature: 0.0,
            max_tokens: 2048,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
            json_constraint: false,
            api_key: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("message list is empty")]
    EmptyMessages,
    #[error("first message must be a system message")]
    FirstNotSystem,
    #[error("message {0} has empty content")]
    EmptyContent(usize),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("transport error: transcript exhausted")]
    TranscriptExhausted,
    #[error("request timed out")]
    Timeout,
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, LlmError>;
}

/// Rejects message lists the wire protocol would not accept.
pub fn check_messages(messages: &[ChatMessage]) -> Result<(), LlmError> {
    let first = messages.first().ok_or(LlmError::EmptyMessages)?;
    if first.role != Role::System {
        return Err(LlmError::FirstNotSystem);
    }
    for (i, m) in messages.iter().enumerate() {
        if m.role != Role::Assistant && m.content.trim().is_empty() {
            return Err(LlmError::EmptyContent(i));
        }
    }
    Ok(())
}

/// Whitespace token count, used when no provider count exists.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

fn approx_usage(messages: &[ChatMessage], reply: &str) -> Usage {
    Usage {
        prompt_tokens: messages.iter().map(|m| approx_tokens(&m.content)).sum(),
        output_tokens: approx_tokens(reply),
    }
}

/// Replays canned replies in order and records every request.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(transcript: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend {
            queue: Mutex::new(transcript.into_iter().map(Into::into).collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("queue lock").len()
    }

    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.requests.lock().expect("request lock").clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, LlmError> {
        check_messages(messages)?;
        self.requests.lock().expect("request lock").push(messages.to_vec());
        let text = self
            .queue
            .lock()
            .expect("queue lock")
            .pop_front()
            .ok_or(LlmError::TranscriptExhausted)?;
        let usage = approx_usage(messages, &text);
        Ok(Completion { text, usage })
    }
}

/// Blocking HTTP client for chat-completions endpoints.
pub struct HttpBackend {
    config: BackendConfig,
    url: String,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("url", &self.url).field("model", &self.config.model).finish()
    }
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let base = config.endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        Ok(HttpBackend { config, url, client })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Request body for `messages`.
    pub fn request_body(&self, messages: &[ChatMessage]) -> Json {
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        });
        if self.config.json_constraint {
            body["response_format"] = json!({"type": "json_object"});
        }
        body
    }

    fn attempt(&self, body: &Json, messages: &[ChatMessage]) -> Result<Completion, Attempt> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(LlmError::Timeout)
            } else {
                Attempt::Retry(LlmError::Transport(e.to_string()))
            }
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| Attempt::Retry(LlmError::Transport(e.to_string())))?;
        if !(200..300).contains(&status) {
            let body: String = text.chars().take(200).collect();
            let err = LlmError::Provider { status, body };
            return Err(if status == 429 || status >= 500 { Attempt::Retry(err) } else { Attempt::Fatal(err) });
        }
        parse_response(&text, messages).map_err(Attempt::Fatal)
    }
}

/// Extracts reply text and usage from a chat-completions response body.
pub fn parse_response(text: &str, messages: &[ChatMessage]) -> Result<Completion, LlmError> {
    let json: Json = serde_json::from_str(text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let content = json
        .pointer("/choices/0/message/content")
        .and_then(Json::as_str)
        .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))?
        .to_string();
    let fallback = approx_usage(messages, &content);
    let usage = Usage {
        prompt_tokens: json.pointer("/usage/prompt_tokens").and_then(Json::as_u64).unwrap_or(fallback.prompt_tokens),
        output_tokens: json
            .pointer("/usage/completion_tokens")
            .and_then(Json::as_u64)
            .unwrap_or(fallback.output_tokens),
    };
    Ok(Completion { text: content, usage })
}

impl ChatBackend for HttpBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, LlmError> {
        check_messages(messages)?;
        let body = self.request_body(messages);
        let attempts = self.config.retry.max_attempts.max(1);
        let mut last = LlmError::Transport("no attempt made".into());
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.retry.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(&body, messages) {
                Ok(c) => return Ok(c),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::warn!("chat request attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(last)
    }
}
