//! OpenAI-compatible `/chat/completions` client with retry and backoff.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Base URL up to and including the API version, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_retries: 3,
            backoff_base_ms: 500,
            timeout_ms: 600_000,
        }
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    retries: AtomicU64,
}

enum Attempt {
    Done(ChatResponse),
    Retry { wait: Option<Duration>, error: BackendError },
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: HttpConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        Self {
            config,
            api_key,
            agent,
            retries: AtomicU64::new(0),
        }
    }

    /// Total retries performed since construction.
    pub fn retry_count(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, request: &ChatRequest) -> Attempt {
        let body = json!({
            "model": self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let started = Instant::now();
        let mut builder = self.agent.post(self.endpoint()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            builder = builder.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match builder.send_json(&body) {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    wait: None,
                    error: BackendError::Unreachable(e.to_string()),
                }
            }
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(|secs| Duration::from_millis((secs * 1000.0) as u64));
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => {}
            429 => {
                return Attempt::Retry {
                    wait: retry_after,
                    error: BackendError::RateLimited {
                        retry_after_ms: retry_after.map(|d| d.as_millis() as u64),
                    },
                }
            }
            500..=599 => {
                return Attempt::Retry {
                    wait: retry_after,
                    error: BackendError::Unreachable(format!("server error {status}: {text}")),
                }
            }
            _ => return Attempt::Fatal(BackendError::Protocol(format!("status {status}: {text}"))),
        }
        let wire: WireResponse = match serde_json::from_str(&text) {
            Ok(w) => w,
            Err(e) => return Attempt::Fatal(BackendError::Protocol(e.to_string())),
        };
        let Some(choice) = wire.choices.into_iter().next() else {
            return Attempt::Fatal(BackendError::Protocol("no choices in response".into()));
        };
        let usage = wire.usage.map_or(TokenUsage::default(), |u| TokenUsage {
            prompt: u.prompt_tokens,
            completion: u.completion_tokens,
        });
        Attempt::Done(ChatResponse {
            content: choice.message.content.unwrap_or_default(),
            token_usage: usage,
            latency_ms: started.elapsed().as_millis() as u64,
            backend_id: self.backend_id(),
        })
    }
}

impl ChatBackend for HttpBackend {
    fn backend_id(&self) -> String {
        format!("http:{}", self.config.model)
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let mut attempt = 0u32;
        loop {
            match self.attempt(request) {
                Attempt::Done(resp) => return Ok(resp),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { wait, error } => {
                    if attempt >= self.config.max_retries {
                        return Err(error);
                    }
                    let backoff = self
                        .config
                        .backoff_base_ms
                        .saturating_mul(1 << attempt.min(16))
                        .min(30_000);
                    let wait = wait.unwrap_or(Duration::from_millis(backoff));
                    tracing::warn!(tag = %request.tag, attempt, ?wait, %error, "retrying chat completion");
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    thread::sleep(wait);
                    attempt += 1;
                }
            }
        }
    }
}
