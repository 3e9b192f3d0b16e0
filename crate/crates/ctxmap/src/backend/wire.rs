//! OpenAI-compatible chat-completions client.

use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use ctxmap_core::chat::{ChatRequest, ChatResponse};
use ctxmap_core::cost::{Pricing, TokenCount};
use ctxmap_core::text::count_tokens;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{Backend, LlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WireConfig {
    /// Base URL such as `https://api.openai.com/v1`, or a full
    /// `.../chat/completions` URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    /// Maximum number of logical requests for the whole run.
    pub request_budget: Option<u64>,
    pub pricing: Pricing,
}

impl Default for WireConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1".into(),
            model: "gpt-3.5-turbo-0125".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_attempts: 3,
            initial_backoff_ms: 500,
            timeout_secs: 120,
            max_in_flight: 4,
            request_budget: None,
            pricing: Pricing::default(),
        }
    }
}

impl WireConfig {
    pub fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Sends one JSON POST. Errors are transport-level failures (connect,
/// timeout, read).
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpReply, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build().into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpReply, String> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

/// A recorded exchange: status plus either a JSON body, a raw body, or a
/// transport failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureReply {
    #[serde(default = "ok_status")]
    pub status: u16,
    #[serde(default)]
    pub body: Option<Value>,
    #[serde(default)]
    pub raw_body: Option<String>,
    #[serde(default)]
    pub transport_error: Option<String>,
}

fn ok_status() -> u16 {
    200
}

impl FixtureReply {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// `(url, headers, body)` of one request seen by [`ReplayTransport`].
pub type Received = (String, Vec<(String, String)>, String);

/// Replays fixtures in order, repeating the last one, and keeps every
/// request body it receives.
pub struct ReplayTransport {
    replies: Vec<FixtureReply>,
    next: AtomicUsize,
    received: Mutex<Vec<Received>>,
}

impl ReplayTransport {
    pub fn new(replies: Vec<FixtureReply>) -> Self {
        assert!(!replies.is_empty(), "replay needs at least one fixture");
        Self { replies, next: AtomicUsize::new(0), received: Mutex::new(Vec::new()) }
    }

    /// `(url, headers, body)` of every request so far.
    pub fn received(&self) -> Vec<Received> {
        self.received.lock().expect("poisoned").clone()
    }
}

impl Transport for ReplayTransport {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpReply, String> {
        self.received.lock().expect("poisoned").push((url.into(), headers.to_vec(), body.into()));
        let i = self.next.fetch_add(1, Ordering::SeqCst).min(self.replies.len() - 1);
        let r = &self.replies[i];
        if let Some(e) = &r.transport_error {
            return Err(e.clone());
        }
        let body = match (&r.raw_body, &r.body) {
            (Some(raw), _) => raw.clone(),
            (None, Some(v)) => v.to_string(),
            (None, None) => String::new(),
        };
        Ok(HttpReply { status: r.status, body })
    }
}

/// Counting semaphore capping in-flight requests.
struct Gate {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self { permits: Mutex::new(n.max(1)), freed: Condvar::new() }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut p = self.permits.lock().expect("gate poisoned");
        while *p == 0 {
            p = self.freed.wait(p).expect("gate poisoned");
        }
        *p -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("gate poisoned") += 1;
        self.0.freed.notify_one();
    }
}

pub struct WireBackend<T: Transport = UreqTransport> {
    config: WireConfig,
    api_key: Option<String>,
    transport: T,
    gate: Gate,
    issued: AtomicU64,
}

impl WireBackend<UreqTransport> {
    /// Reads the API key from `config.api_key_env`; a missing variable
    /// means requests go out without authorization.
    pub fn from_env(config: WireConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let transport = UreqTransport::new(Duration::from_secs(config.timeout_secs.max(1)));
        Self::with_transport(config, api_key, transport)
    }
}

impl<T: Transport> WireBackend<T> {
    pub fn with_transport(config: WireConfig, api_key: Option<String>, transport: T) -> Self {
        let gate = Gate::new(config.max_in_flight);
        Self { config, api_key, transport, gate, issued: AtomicU64::new(0) }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn requests_issued(&self) -> u64 {
        self.issued.load(Ordering::SeqCst)
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        let mut messages = Vec::new();
        if !request.system_instruction.is_empty() {
            messages.push(json!({"role": "system", "content": request.system_instruction}));
        }
        messages.push(json!({"role": "user", "content": request.user_content}));
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }

    fn wire_error(&self, detail: String, status: Option<u16>, attempts: u32) -> LlmError {
        LlmError::Wire { endpoint: self.config.url(), detail, status, attempts }
    }

    fn attempt(&self, url: &str, headers: &[(String, String)], body: &str, request: &ChatRequest, n: u32) -> Result<ChatResponse, LlmError> {
        let reply = self.transport.post_json(url, headers, body).map_err(|e| self.wire_error(e, None, n))?;
        if !(200..300).contains(&reply.status) {
            let snippet: String = reply.body.chars().take(200).collect();
            return Err(self.wire_error(format!("HTTP {}: {snippet}", reply.status), Some(reply.status), n));
        }
        parse_completion(&reply.body, request).map_err(|e| self.wire_error(e, Some(reply.status), n))
    }
}

/// Extracts text and usage from a chat-completions body. Missing usage
/// falls back to the engine tokenizer.
pub fn parse_completion(body: &str, request: &ChatRequest) -> Result<ChatResponse, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("malformed body: {e}"))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| "malformed body: no choices[0].message.content".to_string())?
        .to_string();
    let usage = |key: &str| v.get("usage").and_then(|u| u.get(key)).and_then(Value::as_u64);
    let input_tokens = TokenCount(usage("prompt_tokens").unwrap_or_else(|| request.input_tokens().0));
    let output_tokens = TokenCount(usage("completion_tokens").unwrap_or_else(|| count_tokens(&text)));
    Ok(ChatResponse { text, input_tokens, output_tokens })
}

impl<T: Transport> Backend for WireBackend<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate().map_err(|e| LlmError::InvalidRequest(e.to_string()))?;
        let issued = self.issued.fetch_add(1, Ordering::SeqCst) + 1;
        if let Some(limit) = self.config.request_budget {
            if issued > limit {
                return Err(LlmError::BudgetExceeded { limit });
            }
        }
        let url = self.config.url();
        let body = self.request_body(request).to_string();
        let mut headers = Vec::new();
        if let Some(key) = &self.api_key {
            headers.push(("Authorization".to_string(), format!("Bearer {key}")));
        }
        let attempts = self.config.max_attempts.max(1);
        let _permit = self.gate.acquire();
        let mut n = 1;
        loop {
            match self.attempt(&url, &headers, &body, request, n) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() && n < attempts => {
                    let delay = self.config.initial_backoff_ms.saturating_mul(1 << (n - 1).min(16));
                    warn!(attempt = n, error = %e, delay_ms = delay, "retrying chat completion");
                    std::thread::sleep(Duration::from_millis(delay));
                    n += 1;
                }
                Err(e) => {
                    debug!(error = %e, "chat completion failed");
                    return Err(e);
                }
            }
        }
    }

    fn pricing(&self) -> Pricing {
        self.config.pricing
    }

    fn name(&self) -> String {
        format!("wire({} @ {})", self.config.model, self.config.url())
    }
}
