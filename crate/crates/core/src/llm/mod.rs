//! Chat-completion abstraction shared by both agents.
//!
//! Three interchangeable backends implement [`ChatBackend`]:
//! [`HttpBackend`] (OpenAI-compatible API), [`ReplayBackend`] (recorded
//! transcripts) and [`MockBackend`] (scripted responses keyed by tag).
//! [`RecordingBackend`] wraps any of them and captures a replayable transcript.

mod extract;
mod http;
mod mock;
mod prompts;
mod replay;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use extract::{extract_code_blocks, first_code_block, CodeBlock};
pub use http::{HttpBackend, HttpConfig};
pub use mock::{MockBackend, MockEntry, MockScript};
pub use prompts::{
    render_prompt, Bindings, PromptTemplate, TemplateId, UnboundPlaceholder, PROMPT_ASSET_VERSION,
};
pub use replay::{read_transcript, write_transcript, RecordingBackend, ReplayBackend, TranscriptEntry};

pub const DEFAULT_TEMPERATURE: f64 = 0.5;
pub const DEFAULT_MAX_TOKENS: u32 = 32_768;

/// Sampling parameters shared by every agent request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("rate limited (retry after {retry_after_ms:?} ms)")]
    RateLimited { retry_after_ms: Option<u64> },
    #[error("replay transcript exhausted for tag `{0}`")]
    ReplayExhausted(String),
    #[error("request fingerprint mismatch for tag `{tag}`: recorded {recorded:?}, got {actual}")]
    FingerprintMismatch {
        tag: String,
        recorded: Option<String>,
        actual: String,
    },
    #[error("mock backend has no script for tag `{0}`")]
    Unscripted(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
    /// A failure read back from a transcript; displays as the original did.
    #[error("{0}")]
    Recorded(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Purpose label, e.g. `define_properties`.
    pub tag: String,
    /// Problem the request belongs to; keys per-problem ordering in replay.
    #[serde(default)]
    pub scope: String,
}

impl ChatRequest {
    pub fn new(
        messages: Vec<Message>,
        temperature: f64,
        max_tokens: u32,
        tag: impl Into<String>,
        scope: impl Into<String>,
    ) -> Result<Self, BackendError> {
        let req = Self {
            messages,
            temperature,
            max_tokens,
            tag: tag.into(),
            scope: scope.into(),
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        match self.messages.first() {
            None => return Err(BackendError::InvalidRequest("no messages".into())),
            Some(m) if m.role == Role::Assistant => {
                return Err(BackendError::InvalidRequest(
                    "first message must be system or user".into(),
                ))
            }
            _ => {}
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Replay key: hash of the tag and rendered messages. Temperature and
    /// token cap are deliberately left out.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.tag.as_bytes());
        h.update([0u8]);
        for m in &self.messages {
            h.update(format!("{:?}", m.role).as_bytes());
            h.update([0u8]);
            h.update(m.content.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    /// Content of the last user message, if any.
    pub fn last_user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt + self.completion
    }

    pub fn add(&mut self, other: TokenUsage) {
        self.prompt += other.prompt;
        self.completion += other.completion;
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;
    fn add(mut self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage::add(&mut self, rhs);
        self
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> Self {
        iter.fold(TokenUsage::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub token_usage: TokenUsage,
    pub latency_ms: u64,
    pub backend_id: String,
}

pub trait ChatBackend: Send + Sync {
    fn backend_id(&self) -> String;

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<T> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

/// Sums token usage of every successful call made through it.
pub struct MeteredBackend<'a> {
    inner: &'a dyn ChatBackend,
    usage: Mutex<(TokenUsage, u64)>,
}

impl<'a> MeteredBackend<'a> {
    pub fn new(inner: &'a dyn ChatBackend) -> Self {
        Self {
            inner,
            usage: Mutex::new((TokenUsage::default(), 0)),
        }
    }

    pub fn usage(&self) -> TokenUsage {
        self.usage.lock().unwrap().0
    }

    pub fn calls(&self) -> u64 {
        self.usage.lock().unwrap().1
    }
}

impl ChatBackend for MeteredBackend<'_> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let resp = self.inner.complete(request)?;
        let mut guard = self.usage.lock().unwrap();
        guard.0.add(resp.token_usage);
        guard.1 += 1;
        Ok(resp)
    }
}

/// Rough token estimate (4 bytes per token) used by the offline backends.
pub(crate) fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}
