use std::time::Instant;

use serde::Deserialize;

use super::{LlmConfig, LlmError, LlmGateway};

/// Chat-completions style gateway: posts
/// `{"model", "messages": [{"role": "user", "content": prompt}], "temperature"}`
/// and reads `choices[0].message.content`.
pub struct HttpGateway {
    config: LlmConfig,
    client: reqwest::blocking::Client,
    deadline: Option<Instant>,
    attempts: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

enum Failure {
    Timeout,
    Transport(String),
}

impl HttpGateway {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpGateway { config, client, deadline: None, attempts: 0 })
    }

    /// No request is started after `deadline`.
    pub fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    /// Total HTTP attempts made by this gateway.
    pub fn attempts(&self) -> u32 {
        self.attempts
    }

    fn attempt(&self, prompt: &str) -> Result<String, Failure> {
        let body = serde_json::json!({
            "model": self.config.model_name,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": self.config.temperature,
        });
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let classify =
            |e: reqwest::Error| if e.is_timeout() { Failure::Timeout } else { Failure::Transport(e.to_string()) };
        let response = request.send().map_err(classify)?;
        let response = response.error_for_status().map_err(classify)?;
        let parsed: ChatResponse = response.json().map_err(classify)?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Failure::Transport("response has no choices".into()))
    }
}

impl LlmGateway for HttpGateway {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let mut tries = 0;
        let mut last = Failure::Transport("no attempt made".into());
        while tries <= self.config.max_retries {
            if self.deadline.is_some_and(|d| Instant::now() >= d) {
                return Err(LlmError::BudgetExceeded);
            }
            tries += 1;
            self.attempts += 1;
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err(f) => last = f,
            }
        }
        Err(match last {
            Failure::Timeout => LlmError::Timeout { attempts: tries },
            Failure::Transport(message) => LlmError::Transport { attempts: tries, message },
        })
    }
}
