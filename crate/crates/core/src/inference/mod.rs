//! Backends that turn a rendered prompt into model text.

mod batch;
mod endpoint;
mod heuristic;
mod replay;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::{bounded_map, run_batch};
pub use endpoint::{EndpointClient, EndpointConfig};
pub use heuristic::HeuristicBackend;
pub use replay::{image_digest, request_digest, RecordingBackend, ReplayBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    /// Image files, in prompt order.
    pub images: Vec<PathBuf>,
    pub max_output_tokens: u32,
    pub temperature: f64,
    /// Carried for error context only; not part of the request content.
    pub sample_id: String,
}

impl ChatRequest {
    pub fn new(sample_id: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            system: system.into(),
            user: user.into(),
            images: Vec::new(),
            max_output_tokens: 64,
            temperature: 0.0,
            sample_id: sample_id.into(),
        }
    }

    pub fn with_images(mut self, images: Vec<PathBuf>) -> Self {
        self.images = images;
        self
    }

    fn validate(&self) -> Result<(), InferenceError> {
        let bad = |msg: &str| Err(InferenceError::new(&self.sample_id, ErrorKind::InvalidRequest(msg.into())));
        if self.user.is_empty() && self.images.is_empty() {
            return bad("request has neither text nor images");
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive");
        }
        if !(self.temperature >= 0.0) {
            return bad("temperature must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ErrorKind {
    Timeout { attempts: u32 },
    Transport { attempts: u32, message: String },
    Status { attempts: u32, status: u16, body: String },
    BadResponse(String),
    ReplayMiss { digest: String },
    Image { path: PathBuf, message: String },
    InvalidRequest(String),
    Config(String),
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorKind::Timeout { attempts } => write!(f, "timed out after {attempts} attempts"),
            ErrorKind::Transport { attempts, message } => write!(f, "transport error after {attempts} attempts: {message}"),
            ErrorKind::Status { attempts, status, body } => {
                write!(f, "HTTP {status} after {attempts} attempts: {}", truncate(body, 200))
            }
            ErrorKind::BadResponse(m) => write!(f, "malformed response: {m}"),
            ErrorKind::ReplayMiss { digest } => write!(f, "no replay entry for digest {digest}"),
            ErrorKind::Image { path, message } => write!(f, "image {}: {message}", path.display()),
            ErrorKind::InvalidRequest(m) => write!(f, "invalid request: {m}"),
            ErrorKind::Config(m) => write!(f, "backend configuration: {m}"),
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("sample `{sample_id}`: {kind}")]
pub struct InferenceError {
    pub sample_id: String,
    pub kind: ErrorKind,
}

impl InferenceError {
    pub fn new(sample_id: &str, kind: ErrorKind) -> Self {
        InferenceError {
            sample_id: sample_id.to_string(),
            kind,
        }
    }
}

/// Anything that can answer a chat request. Implementations are shared
/// across worker threads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, InferenceError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, req: &ChatRequest) -> Result<String, InferenceError> {
        (**self).complete(req)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, req: &ChatRequest) -> Result<String, InferenceError> {
        (**self).complete(req)
    }
}

pub enum InferenceBackend {
    Endpoint(EndpointClient),
    Replay(ReplayBackend),
    Baseline(HeuristicBackend),
}

impl InferenceBackend {
    pub fn name(&self) -> &'static str {
        match self {
            InferenceBackend::Endpoint(_) => "endpoint",
            InferenceBackend::Replay(_) => "replay",
            InferenceBackend::Baseline(_) => "baseline",
        }
    }

    /// Model label used in reports.
    pub fn model_label(&self) -> String {
        match self {
            InferenceBackend::Endpoint(c) => c.config().model_name.clone(),
            InferenceBackend::Replay(_) => "replay".into(),
            InferenceBackend::Baseline(_) => "markov-baseline".into(),
        }
    }
}

impl ChatBackend for InferenceBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, InferenceError> {
        req.validate()?;
        match self {
            InferenceBackend::Endpoint(b) => b.complete(req),
            InferenceBackend::Replay(b) => b.complete(req),
            InferenceBackend::Baseline(b) => b.complete(req),
        }
    }
}
