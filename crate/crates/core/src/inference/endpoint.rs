//! Chat-completions client with image parts, retries and jittered backoff.

use std::path::Path;
use std::thread;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ErrorKind, InferenceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL up to and including the API version, e.g. `http://host:8000/v1`.
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub backoff_base_s: f64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "default".into(),
            api_key_env: None,
            timeout_s: 60.0,
            max_retries: 3,
            backoff_base_s: 0.5,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(format!("timeout_s must be positive, got {}", self.timeout_s));
        }
        if !(self.backoff_base_s >= 0.0 && self.backoff_base_s.is_finite()) {
            return Err(format!("backoff_base_s must be non-negative, got {}", self.backoff_base_s));
        }
        if self.base_url.is_empty() {
            return Err("base_url is empty".into());
        }
        Ok(())
    }
}

pub struct EndpointClient {
    config: EndpointConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(ErrorKind),
    Fatal(ErrorKind),
}

fn mime_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("jpg") | Some("jpeg") => "image/jpeg",
        _ => "image/png",
    }
}

fn extract_text(body: &Value) -> Option<String> {
    let content = body.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
        ),
        _ => None,
    }
}

impl EndpointClient {
    pub fn new(config: EndpointConfig) -> Result<Self, InferenceError> {
        config
            .validate()
            .map_err(|m| InferenceError::new("-", ErrorKind::Config(m)))?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                InferenceError::new("-", ErrorKind::Config(format!("environment variable {var} is not set")))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(EndpointClient { config, agent, api_key })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// Request body in the chat-completions shape: a system message when
    /// present and one user message of image parts followed by the text.
    pub fn body(&self, req: &ChatRequest) -> Result<Value, InferenceError> {
        let mut parts = Vec::with_capacity(req.images.len() + 1);
        for path in &req.images {
            let bytes = std::fs::read(path).map_err(|e| {
                InferenceError::new(&req.sample_id, ErrorKind::Image { path: path.clone(), message: e.to_string() })
            })?;
            let data = base64::engine::general_purpose::STANDARD.encode(bytes);
            parts.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:{};base64,{data}", mime_for(path))}
            }));
        }
        parts.push(json!({"type": "text", "text": req.user}));
        let mut messages = Vec::new();
        if !req.system.is_empty() {
            messages.push(json!({"role": "system", "content": req.system}));
        }
        messages.push(json!({"role": "user", "content": parts}));
        Ok(json!({
            "model": self.config.model_name,
            "messages": messages,
            "max_tokens": req.max_output_tokens,
            "temperature": req.temperature,
        }))
    }

    fn attempt(&self, body: &Value, attempts: u32) -> Attempt {
        let mut call = self.agent.post(&self.url());
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        match call.send_json(body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = match resp.body_mut().read_to_string() {
                    Ok(t) => t,
                    Err(e) => return Attempt::Retry(ErrorKind::Transport { attempts, message: e.to_string() }),
                };
                if (200..300).contains(&status) {
                    return match serde_json::from_str::<Value>(&text).ok().as_ref().and_then(extract_text) {
                        Some(t) => Attempt::Done(t),
                        None => Attempt::Fatal(ErrorKind::BadResponse(format!("no choices[0].message.content in {text}"))),
                    };
                }
                let kind = ErrorKind::Status { attempts, status, body: text };
                if status == 429 || status >= 500 {
                    Attempt::Retry(kind)
                } else {
                    Attempt::Fatal(kind)
                }
            }
            Err(ureq::Error::Timeout(_)) => Attempt::Retry(ErrorKind::Timeout { attempts }),
            Err(e) => Attempt::Retry(ErrorKind::Transport { attempts, message: e.to_string() }),
        }
    }

    /// Full jitter: uniform in `[0, base * 2^retry]`.
    fn backoff(&self, retry: u32) -> Duration {
        let cap = self.config.backoff_base_s * f64::from(1u32 << retry.min(16));
        if cap <= 0.0 {
            return Duration::ZERO;
        }
        Duration::from_secs_f64(rand::random_range(0.0..=cap))
    }
}

impl ChatBackend for EndpointClient {
    fn complete(&self, req: &ChatRequest) -> Result<String, InferenceError> {
        let body = self.body(req)?;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body, attempts) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(kind) => return Err(InferenceError::new(&req.sample_id, kind)),
                Attempt::Retry(kind) => {
                    if attempts > self.config.max_retries {
                        return Err(InferenceError::new(&req.sample_id, kind));
                    }
                    log::debug!("sample {}: retrying after {kind}", req.sample_id);
                    thread::sleep(self.backoff(attempts - 1));
                }
            }
        }
    }
}
