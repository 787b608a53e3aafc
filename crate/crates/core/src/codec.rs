//! Decoding model replies into actions and plans.
//!
//! Three stages: the whole reply as JSON, then fenced code blocks, then
//! every balanced-brace span in order of its opening brace.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use crate::llm::{ChatBackend, ChatMessage, LlmError, Usage};
use crate::prompts;

pub const MAX_FORMAT_RETRIES: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub reasoning: String,
    pub action: String,
    pub action_input: Map<String, Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub analysis: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Strict,
    Fenced,
    BraceScan,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("could not decode reply (reached {stage:?}): {}", diagnostics.join("; "))]
pub struct ParseFailure {
    pub stage: Stage,
    pub diagnostics: Vec<String>,
}

enum Check<T> {
    Ok(T),
    /// Carries every required field but is otherwise malformed.
    Bad(String),
    /// Not a candidate for this schema.
    Skip(String),
}

fn check_action(m: &Map<String, Json>) -> Check<Action> {
    const FIELDS: [&str; 3] = ["reasoning", "action", "action_input"];
    if let Some(f) = FIELDS.iter().find(|f| !m.contains_key(**f)) {
        return Check::Skip(format!("missing field `{f}`"));
    }
    if let Some(extra) = m.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Check::Bad(format!("unexpected field `{extra}`"));
    }
    let Some(reasoning) = m["reasoning"].as_str() else {
        return Check::Bad("`reasoning` must be a string".into());
    };
    let action = match m["action"].as_str() {
        Some(a) if !a.trim().is_empty() => a.trim(),
        _ => return Check::Bad("`action` must be a non-empty string".into()),
    };
    let Some(input) = m["action_input"].as_object() else {
        return Check::Bad("`action_input` must be an object".into());
    };
    Check::Ok(Action {
        reasoning: reasoning.to_string(),
        action: action.to_string(),
        action_input: input.clone(),
    })
}

fn check_plan(m: &Map<String, Json>) -> Check<Plan> {
    const FIELDS: [&str; 2] = ["analysis", "steps"];
    if let Some(f) = FIELDS.iter().find(|f| !m.contains_key(**f)) {
        return Check::Skip(format!("missing field `{f}`"));
    }
    if let Some(extra) = m.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Check::Bad(format!("unexpected field `{extra}`"));
    }
    let Some(analysis) = m["analysis"].as_str() else {
        return Check::Bad("`analysis` must be a string".into());
    };
    let Some(items) = m["steps"].as_array() else {
        return Check::Bad("`steps` must be an array".into());
    };
    if items.is_empty() {
        return Check::Bad("empty steps".into());
    }
    let mut steps = Vec::with_capacity(items.len());
    for s in items {
        match s.as_str() {
            Some(s) => steps.push(s.to_string()),
            None => return Check::Bad("every step must be a string".into()),
        }
    }
    Check::Ok(Plan {
        analysis: analysis.to_string(),
        steps,
    })
}

fn strict<T>(text: &str, check: fn(&Map<String, Json>) -> Check<T>, diags: &mut Vec<String>, label: &str) -> Option<T> {
    match serde_json::from_str::<Json>(text.trim()) {
        Ok(Json::Object(m)) => match check(&m) {
            Check::Ok(v) => Some(v),
            Check::Bad(d) | Check::Skip(d) => {
                diags.push(format!("{label}: {d}"));
                None
            }
        },
        Ok(_) => {
            diags.push(format!("{label}: not a JSON object"));
            None
        }
        Err(e) => {
            diags.push(format!("{label}: {e}"));
            None
        }
    }
}

/// Contents of ``` fenced blocks, in order.
pub fn fenced_blocks(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
        let info = &after[..body_start];
        // An info string is a single word such as `json`; otherwise the
        // block starts right after the fence.
        let body_start = if info.trim().chars().all(|c| c.is_ascii_alphanumeric()) { body_start } else { 0 };
        let body = &after[body_start..];
        let Some(close) = body.find("```") else { break };
        out.push(&body[..close]);
        rest = &body[close + 3..];
    }
    out
}

/// End (exclusive) of the balanced object opening at `start`, if any.
/// Braces inside JSON strings are ignored.
pub fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    debug_assert_eq!(bytes[start], b'{');
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Every balanced-brace span `(start, end)` in order of opening brace.
pub fn balanced_spans(raw: &str) -> Vec<(usize, usize)> {
    let bytes = raw.as_bytes();
    bytes
        .iter()
        .enumerate()
        .filter(|(_, b)| **b == b'{')
        .filter_map(|(i, _)| balanced_end(bytes, i).map(|end| (i, end)))
        .collect()
}

fn decode<T>(raw: &str, check: fn(&Map<String, Json>) -> Check<T>) -> Result<T, ParseFailure> {
    let mut diags = Vec::new();
    if let Some(v) = strict(raw, check, &mut diags, "strict") {
        return Ok(v);
    }
    for (i, block) in fenced_blocks(raw).into_iter().enumerate() {
        if let Some(v) = strict(block, check, &mut diags, &format!("fence {i}")) {
            return Ok(v);
        }
    }
    for (start, end) in balanced_spans(raw) {
        if let Ok(Json::Object(m)) = serde_json::from_str::<Json>(&raw[start..end]) {
            match check(&m) {
                Check::Ok(v) => return Ok(v),
                Check::Bad(d) => {
                    diags.push(format!("object at byte {start}: {d}"));
                    return Err(ParseFailure {
                        stage: Stage::BraceScan,
                        diagnostics: diags,
                    });
                }
                Check::Skip(_) => {}
            }
        }
    }
    diags.push("no object with the required fields".into());
    Err(ParseFailure {
        stage: Stage::BraceScan,
        diagnostics: diags,
    })
}

pub fn parse_action(raw: &str) -> Result<Action, ParseFailure> {
    decode(raw, check_action)
}

pub fn parse_plan(raw: &str) -> Result<Plan, ParseFailure> {
    decode(raw, check_plan)
}

pub fn recovery_prompt() -> &'static str {
    prompts::FORMAT_RECOVERY
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<T> {
    pub value: T,
    pub format_retries: u32,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("format retries exhausted after {retries} attempts: {last}")]
    FormatExhausted { retries: u32, usage: Usage, last: ParseFailure },
    #[error("backend failed: {error}")]
    Backend { error: LlmError, retries: u32, usage: Usage },
}

impl DecodeError {
    pub fn usage(&self) -> Usage {
        match self {
            DecodeError::FormatExhausted { usage, .. } | DecodeError::Backend { usage, .. } => *usage,
        }
    }

    pub fn retries(&self) -> u32 {
        match self {
            DecodeError::FormatExhausted { retries, .. } | DecodeError::Backend { retries, .. } => *retries,
        }
    }
}

/// Queries the backend and decodes the reply, re-asking with the
/// recovery prompt after each unparseable reply. Replies and recovery
/// prompts are appended to `messages`.
pub fn query_and_decode<T>(
    backend: &dyn ChatBackend,
    messages: &mut Vec<ChatMessage>,
    parse: fn(&str) -> Result<T, ParseFailure>,
    max_retries: u32,
) -> Result<Decoded<T>, DecodeError> {
    let mut usage = Usage::default();
    let mut retries = 0;
    loop {
        let completion = backend
            .complete(messages)
            .map_err(|error| DecodeError::Backend { error, retries, usage })?;
        usage += completion.usage;
        messages.push(ChatMessage::assistant(completion.text.clone()));
        match parse(&completion.text) {
            Ok(value) => {
                return Ok(Decoded {
                    value,
                    format_retries: retries,
                    usage,
                })
            }
            Err(last) => {
                if retries >= max_retries {
                    return Err(DecodeError::FormatExhausted { retries, usage, last });
                }
                retries += 1;
                messages.push(ChatMessage::user(recovery_prompt()));
            }
        }
    }
}
