//! Chat-completion backends: a deterministic scripted model and an
//! OpenAI-compatible HTTP client.

mod scripted;
mod wire;

pub use scripted::ScriptedBackend;
pub use wire::{
    parse_completion, FixtureReply, HttpReply, Received, ReplayTransport, Transport, UreqTransport, WireBackend, WireConfig,
};

use ctxmap_core::chat::{ChatRequest, ChatResponse};
use ctxmap_core::cost::Pricing;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("{endpoint}: {detail} (gave up after {attempts} attempt(s))")]
    Wire { endpoint: String, detail: String, status: Option<u16>, attempts: u32 },
    #[error("request budget of {limit} exhausted")]
    BudgetExceeded { limit: u64 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("scripted backend: {0}")]
    Scripted(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl LlmError {
    /// Transport failures, timeouts, non-2xx replies and malformed bodies
    /// are worth retrying; everything else is final.
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Wire { .. })
    }
}

/// One chat-completion provider. Implementations must accept concurrent
/// calls.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;

    fn pricing(&self) -> Pricing {
        Pricing::default()
    }

    fn name(&self) -> String;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
    fn pricing(&self) -> Pricing {
        (**self).pricing()
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
    fn pricing(&self) -> Pricing {
        (**self).pricing()
    }
    fn name(&self) -> String {
        (**self).name()
    }
}
