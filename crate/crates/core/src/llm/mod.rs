//! Chat-completion client with pluggable backends and the pipeline's prompts.

pub mod cassette;
pub mod live;
pub mod prompts;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, RecordingBackend, ReplayBackend};
pub use live::{LiveBackend, LlmConfig};
pub use prompts::{render_prompt, TemplateId};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("no recorded response for request {hash}; request was:\n{snapshot}")]
    ReplayMismatch { hash: String, snapshot: String },
    #[error("cassette error: {0}")]
    Cassette(String),
    #[error("missing prompt slot `{0}`")]
    MissingSlot(String),
    #[error("configuration error: {0}")]
    Config(String),
}

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
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
    #[serde(default)]
    pub tools: Vec<ToolDescriptor>,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        ChatRequest { model_id: model_id.into(), temperature: 0.0, messages, tools: Vec::new() }
    }

    /// SHA-256 over the canonical JSON form of the request.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("serializable");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    #[serde(default)]
    pub usage: Usage,
}

impl ChatResponse {
    pub fn text(text: impl Into<String>) -> Self {
        ChatResponse { text: Some(text.into()), tool_call: None, usage: Usage::default() }
    }

    pub fn tool(name: impl Into<String>, arguments: Value) -> Self {
        ChatResponse {
            text: None,
            tool_call: Some(ToolCall { name: name.into(), arguments }),
            usage: Usage::default(),
        }
    }

    pub fn with_usage(mut self, prompt_tokens: u64, completion_tokens: u64) -> Self {
        self.usage = Usage { prompt_tokens, completion_tokens };
        self
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

/// Backend driven by a closure; handy for tests and for authoring cassettes.
pub struct ScriptedBackend<F>(Mutex<F>);

impl<F> ScriptedBackend<F>
where
    F: FnMut(&ChatRequest) -> Result<ChatResponse, LlmError> + Send,
{
    pub fn new(f: F) -> Self {
        ScriptedBackend(Mutex::new(f))
    }
}

impl<F> ChatBackend for ScriptedBackend<F>
where
    F: FnMut(&ChatRequest) -> Result<ChatResponse, LlmError> + Send,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (self.0.lock().expect("scripted backend lock"))(request)
    }
}

/// Replies from a fixed queue, in order.
pub fn queued_backend(responses: Vec<ChatResponse>) -> impl ChatBackend {
    let mut queue = std::collections::VecDeque::from(responses);
    ScriptedBackend::new(move |req: &ChatRequest| {
        queue.pop_front().ok_or_else(|| LlmError::ReplayMismatch {
            hash: req.content_hash(),
            snapshot: "response queue exhausted".into(),
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Offline,
    Agent,
}

/// Front end shared by the pipeline: checks preconditions, stamps model and
/// temperature, logs every request and accounts token usage per phase.
#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<dyn ChatBackend>,
    pub model_id: String,
    pub temperature: f64,
    log: Arc<Mutex<Vec<ChatRequest>>>,
    usage: Arc<Mutex<BTreeMap<Phase, Usage>>>,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>, model_id: impl Into<String>) -> Self {
        LlmClient {
            backend,
            model_id: model_id.into(),
            temperature: 0.0,
            log: Arc::default(),
            usage: Arc::default(),
        }
    }

    pub fn request(&self, messages: Vec<ChatMessage>, tools: Vec<ToolDescriptor>) -> ChatRequest {
        ChatRequest { model_id: self.model_id.clone(), temperature: self.temperature, messages, tools }
    }

    pub fn complete(&self, phase: Phase, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        if request.messages.is_empty() {
            return Err(LlmError::Precondition("request has no messages".into()));
        }
        self.log.lock().expect("log lock").push(request.clone());
        let response = self.backend.complete(request)?;
        *self.usage.lock().expect("usage lock").entry(phase).or_default() += response.usage;
        Ok(response)
    }

    pub fn request_log(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn usage(&self) -> BTreeMap<Phase, Usage> {
        self.usage.lock().expect("usage lock").clone()
    }

    /// A client sharing the backend but with fresh log and usage counters.
    pub fn fork(&self) -> Self {
        LlmClient { log: Arc::default(), usage: Arc::default(), ..self.clone() }
    }
}

/// Text of the first fenced code block, preferring ```coq blocks.
pub fn extract_code_block(text: &str) -> Option<String> {
    let mut best: Option<String> = None;
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let line_end = after.find('\n')?;
        let lang = after[..line_end].trim().to_ascii_lowercase();
        let body = &after[line_end + 1..];
        let close = body.find("```")?;
        let code = body[..close].to_string();
        if lang == "coq" || lang == "rocq" {
            return Some(code);
        }
        best.get_or_insert(code);
        rest = &body[close + 3..];
    }
    best
}

/// Text after the last fenced code block (or all of it when there is none).
pub fn text_after_code(text: &str) -> &str {
    let fences: Vec<usize> = text.match_indices("```").map(|(i, _)| i).collect();
    if fences.len() >= 2 && fences.len() % 2 == 0 {
        &text[fences[fences.len() - 1] + 3..]
    } else {
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_message_list_rejected() {
        let client = LlmClient::new(Arc::new(queued_backend(vec![])), "m");
        let req = client.request(vec![], vec![]);
        assert!(matches!(client.complete(Phase::Agent, &req), Err(LlmError::Precondition(_))));
    }

    #[test]
    fn defaults_to_temperature_zero() {
        let client = LlmClient::new(Arc::new(queued_backend(vec![])), "m");
        assert_eq!(client.request(vec![], vec![]).temperature, 0.0);
        assert_eq!(ChatRequest::new("m", vec![]).temperature, 0.0);
    }

    #[test]
    fn usage_accounted_per_phase() {
        let client = LlmClient::new(
            Arc::new(queued_backend(vec![
                ChatResponse::text("a").with_usage(10, 2),
                ChatResponse::text("b").with_usage(5, 1),
                ChatResponse::tool("adapt_lemma", json!({})).with_usage(1, 1),
            ])),
            "m",
        );
        let req = client.request(vec![ChatMessage::new(Role::User, "x")], vec![]);
        client.complete(Phase::Offline, &req).unwrap();
        client.complete(Phase::Offline, &req).unwrap();
        client.complete(Phase::Agent, &req).unwrap();
        let usage = client.usage();
        assert_eq!(usage[&Phase::Offline], Usage { prompt_tokens: 15, completion_tokens: 3 });
        assert_eq!(usage[&Phase::Agent], Usage { prompt_tokens: 1, completion_tokens: 1 });
        assert_eq!(client.request_log().len(), 3);
    }

    #[test]
    fn hash_is_content_based() {
        let a = ChatRequest::new("m", vec![ChatMessage::new(Role::User, "x")]);
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.messages[0].content.push('y');
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn code_block_extraction() {
        let text = "Here:\n```text\nnot this\n```\n```coq\nLemma a : True.\n```\nPlan:\n1. a: use";
        assert_eq!(extract_code_block(text).unwrap(), "Lemma a : True.\n");
        assert_eq!(text_after_code(text).trim(), "Plan:\n1. a: use");
        assert_eq!(extract_code_block("```\nx\n```").unwrap(), "x\n");
        assert!(extract_code_block("no code").is_none());
    }
}
