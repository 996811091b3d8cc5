//! Uniform agent-backend abstraction over live model providers and scripted
//! oracle policies.
//!
//! Everything behind [`AgentBackend`] shares one contract: a completion call
//! never fails past the gateway boundary. Provider problems come back typed
//! inside the [`CompletionResult`] instead of as errors.

mod live;
mod scripted;
mod stub;

pub use live::{LiveBackend, LiveProviderConfig, WireShape};
pub use scripted::{actor_seed, scripted_turn, PolicyParseError, ScriptedBackend, ScriptedPolicy};
pub use stub::{StubRequest, StubResponse, StubServer};

use std::sync::Mutex;

use thiserror::Error;

use crate::domain::{ConditionSpec, ProviderErrorReason, ReasoningMode};

/// Label of one prompt section, in the order the engine assembles them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionKind {
    System,
    ScenarioBrief,
    Transcript,
    PrivateBlock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSection {
    pub kind: SectionKind,
    pub text: String,
}

/// One backend call: ordered prompt sections plus the condition-derived
/// sampling settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt_sections: Vec<PromptSection>,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub reasoning_mode: ReasoningMode,
    pub timeout_ms: u64,
    pub seed: Option<u64>,
    /// Number of turns this agent has already taken in the episode. Live
    /// adapters ignore it; scripted policies are pure functions of it.
    pub agent_turn_index: u32,
}

impl CompletionRequest {
    /// Builds a request from a validated condition; the output budget is the
    /// condition's token floor, so the floor invariant holds by construction.
    pub fn from_condition(
        condition: &ConditionSpec,
        prompt_sections: Vec<PromptSection>,
        agent_turn_index: u32,
        seed: Option<u64>,
    ) -> CompletionRequest {
        CompletionRequest {
            prompt_sections,
            max_output_tokens: condition.token_floor,
            temperature: condition.temperature,
            reasoning_mode: condition.reasoning_effort,
            timeout_ms: condition.timeout_floor_ms,
            seed,
            agent_turn_index,
        }
    }

    pub fn section(&self, kind: SectionKind) -> Option<&str> {
        self.prompt_sections
            .iter()
            .find(|s| s.kind == kind)
            .map(|s| s.text.as_str())
    }

    /// Concatenated prompt text, used by adapters that take a single string.
    pub fn flattened_prompt(&self) -> String {
        let mut out = String::new();
        for (i, section) in self.prompt_sections.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            out.push_str(&section.text);
        }
        out
    }
}

/// Either the model text or a typed provider error; never both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompletionOutcome {
    Text(String),
    ProviderError(ProviderErrorReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub outcome: CompletionOutcome,
    pub tokens_out: u64,
    pub latency_ms: u64,
}

impl CompletionResult {
    pub fn text(text: impl Into<String>) -> CompletionResult {
        let text = text.into();
        let tokens_out = estimate_tokens(&text);
        CompletionResult {
            outcome: CompletionOutcome::Text(text),
            tokens_out,
            latency_ms: 0,
        }
    }

    pub fn provider_error(reason: ProviderErrorReason) -> CompletionResult {
        CompletionResult {
            outcome: CompletionOutcome::ProviderError(reason),
            tokens_out: 0,
            latency_ms: 0,
        }
    }

    pub fn text_ref(&self) -> Option<&str> {
        match &self.outcome {
            CompletionOutcome::Text(t) => Some(t),
            CompletionOutcome::ProviderError(_) => None,
        }
    }
}

/// Deterministic token-count proxy used when a provider reports no usage:
/// whitespace-separated word count.
pub fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// An agent backend: one call per turn, prompt in, completion out.
pub trait AgentBackend: Send + Sync {
    /// Stable identifier used in logs and run records.
    fn name(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> CompletionResult;
}

/// Problems constructing a backend. Calls themselves never error.
#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("unknown scripted policy: {0}")]
    UnknownPolicy(String),
    #[error("credential environment variable {var} is not set for provider {provider}")]
    MissingCredentials { provider: String, var: String },
    #[error("failed to construct HTTP client: {0}")]
    Client(String),
}

/// Test-support wrapper that records every request passed through it.
pub struct RecordingBackend<B> {
    inner: B,
    requests: Mutex<Vec<CompletionRequest>>,
}

impl<B: AgentBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn recorded_requests(&self) -> Vec<CompletionRequest> {
        self.requests.lock().expect("recording lock").clone()
    }
}

impl<B: AgentBackend> AgentBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &CompletionRequest) -> CompletionResult {
        self.requests
            .lock()
            .expect("recording lock")
            .push(request.clone());
        self.inner.complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ConditionSpec;

    #[test]
    fn request_inherits_condition_floors() {
        let condition = ConditionSpec::preset("scaffold_1024").unwrap();
        let request = CompletionRequest::from_condition(&condition, vec![], 0, Some(7));
        assert_eq!(request.max_output_tokens, condition.token_floor);
        assert_eq!(request.timeout_ms, condition.timeout_floor_ms);
        assert_eq!(request.temperature, condition.temperature);
        assert!(request.max_output_tokens >= condition.token_floor);
    }

    #[test]
    fn token_estimate_counts_words() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("ACTION: COUNTER\nwe object"), 4);
    }
}
