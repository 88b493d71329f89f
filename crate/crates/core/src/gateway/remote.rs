//! Chat-completion HTTP backend.
//!
//! One POST to `{endpoint}/chat/completions` per generate call, with
//! bounded retries and exponential backoff on transport errors and
//! non-2xx statuses. A request that reached the server successfully is
//! never retried, so completions are not silently duplicated.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    validate_request, BackendConfig, BackendError, GenerationRequest, Semaphore, TextBackend,
};

const SYSTEM_PROMPT: &str = "You are a precise household robot task planner.";

pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    bearer: Option<String>,
    max_retries: u32,
    retry_backoff: Duration,
    in_flight: Semaphore,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    content: String,
}

impl RemoteBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
            .build()
            .map_err(|e| BackendError::Protocol(format!("http client: {e}")))?;
        let bearer = cfg
            .auth_env
            .as_ref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|token| !token.is_empty());
        Ok(RemoteBackend {
            client,
            url: format!("{}/chat/completions", cfg.endpoint.trim_end_matches('/')),
            model: cfg.model.clone(),
            bearer,
            max_retries: cfg.max_retries,
            retry_backoff: Duration::from_millis(cfg.retry_backoff_ms),
            in_flight: Semaphore::new(cfg.max_in_flight),
        })
    }

    fn attempt(&self, req: &GenerationRequest) -> Result<String, AttemptError> {
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": req.prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "stop": req.stop,
        });
        let mut request = self.client.post(&self.url).json(&body);
        if let Some(token) = &self.bearer {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .map_err(|e| AttemptError::Retryable(format!("transport: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(AttemptError::Retryable(format!("status {status}")));
        }
        // The server accepted and answered; parse failures are final.
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| AttemptError::Fatal(BackendError::Protocol(format!("body: {e}"))))?;
        parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| AttemptError::Fatal(BackendError::Protocol("no choices".into())))
    }
}

enum AttemptError {
    Retryable(String),
    Fatal(BackendError),
}

impl TextBackend for RemoteBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        validate_request(req)?;
        let _permit = self.in_flight.acquire();
        let attempts = self.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            match self.attempt(req) {
                Ok(text) => return Ok(text),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable(message)) => {
                    last = message;
                    if attempt + 1 < attempts {
                        std::thread::sleep(self.retry_backoff * 2u32.pow(attempt.min(4)));
                    }
                }
            }
        }
        Err(BackendError::Unavailable {
            attempts,
            message: last,
        })
    }
}
