//! OpenAI-compatible chat-completions endpoint over blocking HTTP.

use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError, Role, ToolCall, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_timeout() -> u64 {
    120
}
fn default_key_env() -> String {
    "LEMMATA_API_KEY".into()
}
fn default_retries() -> u32 {
    3
}

impl LlmConfig {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))
    }
}

pub struct LiveBackend {
    config: LlmConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl LiveBackend {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(LiveBackend { config, client, api_key })
    }

    fn attempt(&self, body: &Value) -> Result<Value, (bool, String)> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| (true, e.to_string()))?;
        if status.is_success() {
            serde_json::from_str(&text).map_err(|e| (false, format!("malformed response: {e}")))
        } else {
            let retry = status.as_u16() == 429 || status.is_server_error();
            Err((retry, format!("HTTP {status}: {text}")))
        }
    }
}

pub(crate) fn request_body(request: &ChatRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            json!({ "role": role, "content": m.content })
        })
        .collect();
    let mut body = json!({
        "model": request.model_id,
        "temperature": request.temperature,
        "messages": messages,
    });
    if !request.tools.is_empty() {
        let tools: Vec<Value> = request
            .tools
            .iter()
            .map(|t| {
                json!({ "type": "function", "function": {
                    "name": t.name, "description": t.description, "parameters": t.parameters } })
            })
            .collect();
        body["tools"] = Value::Array(tools);
    }
    body
}

pub(crate) fn parse_response(value: &Value) -> Result<ChatResponse, LlmError> {
    let malformed = |what: &str| LlmError::Transport { attempts: 1, detail: format!("response lacks {what}") };
    let message = value.pointer("/choices/0/message").ok_or_else(|| malformed("choices[0].message"))?;
    let text = message.get("content").and_then(Value::as_str).filter(|s| !s.is_empty()).map(str::to_string);
    let tool_call = match message.pointer("/tool_calls/0/function") {
        Some(f) => {
            let name = f.get("name").and_then(Value::as_str).ok_or_else(|| malformed("tool name"))?;
            let arguments = match f.get("arguments") {
                Some(Value::String(s)) => serde_json::from_str(s).unwrap_or(Value::String(s.clone())),
                Some(v) => v.clone(),
                None => Value::Null,
            };
            Some(ToolCall { name: name.to_string(), arguments })
        }
        None => None,
    };
    let usage = Usage {
        prompt_tokens: value.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: value.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    };
    Ok(ChatResponse { text, tool_call, usage })
}

impl ChatBackend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = request_body(request);
        let attempts = self.config.max_retries.max(1);
        let mut last = String::new();
        for n in 1..=attempts {
            match self.attempt(&body) {
                Ok(v) => return parse_response(&v),
                Err((retry, detail)) => {
                    log::warn!("chat request attempt {n}/{attempts} failed: {detail}");
                    last = detail;
                    if !retry {
                        return Err(LlmError::Transport { attempts: n, detail: last });
                    }
                    if n < attempts {
                        thread::sleep(Duration::from_millis(500 << n));
                    }
                }
            }
        }
        Err(LlmError::Transport { attempts, detail: last })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::prompts::adapt_tool_descriptor;
    use crate::llm::ChatMessage;

    #[test]
    fn body_carries_tools_only_when_present() {
        let mut r = ChatRequest::new("m", vec![ChatMessage::new(Role::User, "x")]);
        assert!(request_body(&r).get("tools").is_none());
        r.tools.push(adapt_tool_descriptor());
        assert_eq!(request_body(&r)["tools"][0]["function"]["name"], "adapt_lemma");
    }

    #[test]
    fn parses_text_and_tool_replies() {
        let text = json!({"choices":[{"message":{"content":"auto."}}],"usage":{"prompt_tokens":3,"completion_tokens":1}});
        let r = parse_response(&text).unwrap();
        assert_eq!(r.text.as_deref(), Some("auto."));
        assert_eq!(r.usage.prompt_tokens, 3);
        let tool = json!({"choices":[{"message":{"content":null,"tool_calls":[{"function":{"name":"adapt_lemma","arguments":"{\"lemma\":\"HL2\"}"}}]}}]});
        let r = parse_response(&tool).unwrap();
        assert!(r.text.is_none());
        assert_eq!(r.tool_call.unwrap().arguments["lemma"], "HL2");
    }

    #[test]
    fn config_defaults() {
        let c: LlmConfig = serde_json::from_str(r#"{"endpoint":"http://x","model_id":"m"}"#).unwrap();
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.max_retries, 3);
        assert_eq!(c.api_key_env, "LEMMATA_API_KEY");
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let backend = LiveBackend::new(LlmConfig {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            model_id: "m".into(),
            temperature: 0.0,
            timeout_secs: 2,
            api_key_env: "LEMMATA_TEST_UNSET_KEY".into(),
            max_retries: 1,
        })
        .unwrap();
        let r = backend.complete(&ChatRequest::new("m", vec![ChatMessage::new(Role::User, "x")]));
        assert!(matches!(r, Err(LlmError::Transport { attempts: 1, .. })));
    }
}
