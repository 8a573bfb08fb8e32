//! Language-model access: the gateway contract, a live HTTP gateway, a
//! scripted mock, and the filtering that turns free-form replies into
//! executable [`ActionCommand`]s.

mod actions;
mod http;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::Clock;

pub use actions::{
    filter_json_payload, parse_action_sequence, ActionCommand, ActionParseError, MalformedCommand, Verb,
};
pub use http::HttpGateway;
pub use mock::{MockEntry, MockGateway, MockReply};

pub const ENV_ENDPOINT: &str = "CRASHREPRO_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "CRASHREPRO_LLM_MODEL";
pub const ENV_API_KEY: &str = "CRASHREPRO_LLM_API_KEY";

const REPAIR_INSTRUCTION: &str = include_str!("../../templates/repair.txt");

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("deadline passed before the request could be sent")]
    BudgetExceeded,
    #[error("mock script exhausted at call {calls}")]
    ExhaustedScript { calls: usize },
    #[error("invalid mock script: {0}")]
    InvalidScript(String),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model_name: String,
    #[serde(default)]
    pub api_key: Option<String>,
    pub request_timeout: Duration,
    pub max_retries: u32,
    pub temperature: f64,
}

impl LlmConfig {
    pub fn new(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        LlmConfig {
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            api_key: None,
            request_timeout: Duration::from_secs(60),
            max_retries: 2,
            temperature: 0.0,
        }
    }

    /// Reads endpoint, model and key from the `CRASHREPRO_LLM_*` variables.
    pub fn from_env() -> Result<Self, LlmError> {
        let endpoint =
            std::env::var(ENV_ENDPOINT).map_err(|_| LlmError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let model = std::env::var(ENV_MODEL).map_err(|_| LlmError::Config(format!("{ENV_MODEL} is not set")))?;
        let mut config = Self::new(endpoint, model);
        config.api_key = std::env::var(ENV_API_KEY).ok();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.request_timeout.is_zero() {
            return Err(LlmError::Config("request_timeout must be positive".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Config("temperature must be non-negative".into()));
        }
        if self.endpoint.trim().is_empty() {
            return Err(LlmError::Config("endpoint is empty".into()));
        }
        Ok(())
    }
}

/// Anything that turns a prompt into raw model text.
pub trait LlmGateway {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError>;
}

impl<G: LlmGateway + ?Sized> LlmGateway for Box<G> {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

impl<G: LlmGateway + ?Sized> LlmGateway for &mut G {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

/// Short stable hash of a prompt (first 16 hex digits of SHA-256).
pub fn prompt_fingerprint(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// One prompt/response round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub prompt_fingerprint: String,
    #[serde(skip)]
    pub prompt: String,
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<Vec<ActionCommand>>,
    /// Seconds, measured on the session clock.
    pub latency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Result of asking the model for the next actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRequest {
    pub exchanges: Vec<LlmExchange>,
    /// Absent when neither the first reply nor the repair reply yielded a
    /// usable action array.
    pub commands: Option<Vec<ActionCommand>>,
    /// Why the last reply was rejected, when it was.
    pub rejection: Option<String>,
}

impl ActionRequest {
    pub fn latency(&self) -> f64 {
        self.exchanges.iter().map(|e| e.latency).sum()
    }
}

/// Calls the gateway, timing the call on `clock` and charging
/// `simulated_cost` to it.
pub fn timed_complete(
    gateway: &mut dyn LlmGateway,
    prompt: &str,
    clock: &dyn Clock,
    simulated_cost: Duration,
) -> (Result<String, LlmError>, f64) {
    let start = clock.elapsed();
    let result = gateway.complete(prompt);
    clock.advance(simulated_cost);
    let latency = clock.elapsed().saturating_sub(start).as_secs_f64();
    (result, latency)
}

/// Sends `prompt`, filters the reply down to a JSON action array and parses
/// it. If that fails, re-prompts once with a repair instruction appended.
/// Transport errors are returned as-is.
pub fn request_actions(
    gateway: &mut dyn LlmGateway,
    prompt: &str,
    clock: &dyn Clock,
    simulated_cost: Duration,
) -> Result<ActionRequest, (LlmError, Vec<LlmExchange>)> {
    let mut exchanges = Vec::new();
    let mut rejection = None;
    let repair_prompt = format!("{prompt}{REPAIR_INSTRUCTION}");
    for attempt_prompt in [prompt, repair_prompt.as_str()] {
        let (result, latency) = timed_complete(gateway, attempt_prompt, clock, simulated_cost);
        let raw = match result {
            Ok(raw) => raw,
            Err(e) => {
                exchanges.push(LlmExchange {
                    prompt_fingerprint: prompt_fingerprint(attempt_prompt),
                    prompt: attempt_prompt.to_string(),
                    raw_response: String::new(),
                    parsed: None,
                    latency,
                    error: Some(e.to_string()),
                });
                return Err((e, exchanges));
            }
        };
        let parsed = match filter_json_payload(&raw) {
            None => {
                rejection = Some("no JSON action array in reply".to_string());
                None
            }
            Some(json) => match parse_action_sequence(&json) {
                Ok(cmds) => Some(cmds),
                Err(e) => {
                    rejection = Some(e.to_string());
                    None
                }
            },
        };
        let done = parsed.is_some();
        exchanges.push(LlmExchange {
            prompt_fingerprint: prompt_fingerprint(attempt_prompt),
            prompt: attempt_prompt.to_string(),
            raw_response: raw,
            parsed: parsed.clone(),
            latency,
            error: None,
        });
        if done {
            return Ok(ActionRequest { exchanges, commands: parsed, rejection: None });
        }
    }
    Ok(ActionRequest { exchanges, commands: None, rejection })
}
