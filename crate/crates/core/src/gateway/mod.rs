//! Uniform text-generation interface over three backends: a remote
//! chat-completion endpoint, scripted fixtures, and the symbolic
//! planner. Backends are shared services; `generate` may be called from
//! many evaluation workers at once.

mod oracle_backend;
mod remote;
mod scripted;

pub use oracle_backend::OracleBackend;
pub use remote::RemoteBackend;
pub use scripted::ScriptedBackend;

use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goal::TaskInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
}

impl GenerationRequest {
    /// Deterministic request (temperature 0), the default for every
    /// evaluation flow.
    pub fn deterministic(prompt: impl Into<String>) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            max_tokens: 1024,
            temperature: 0.0,
            stop: Vec::new(),
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Scripted,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    /// Fixture file for the scripted backend.
    pub fixtures: Option<PathBuf>,
    /// Remote requests allowed in flight at once.
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Oracle,
            endpoint: "http://127.0.0.1:8080".to_string(),
            model: "local-planner".to_string(),
            auth_env: None,
            timeout_secs: 30,
            max_retries: 3,
            retry_backoff_ms: 250,
            fixtures: None,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("fixture miss: {0}")]
    KeyMiss(String),
    #[error("empty prompt")]
    EmptyPrompt,
}

/// Text in, text out. Scripted and oracle backends are referentially
/// transparent; none of them mutate planner state.
pub trait TextBackend: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError>;
}

/// Counting semaphore bounding in-flight remote requests.
pub(crate) struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    pub(crate) fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

pub(crate) struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().unwrap();
        *permits += 1;
        self.semaphore.cv.notify_one();
    }
}

/// Builds backends from a config: remote and scripted backends are
/// constructed once and shared, the oracle backend is instantiated per
/// task (its answers come from that task's decomposition).
pub struct BackendProvider {
    kind: BackendKind,
    shared: Option<Arc<dyn TextBackend>>,
}

impl BackendProvider {
    pub fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let shared: Option<Arc<dyn TextBackend>> = match cfg.kind {
            BackendKind::Remote => Some(Arc::new(RemoteBackend::new(cfg)?)),
            BackendKind::Scripted => {
                let path = cfg.fixtures.as_ref().ok_or_else(|| {
                    BackendError::Protocol("scripted backend requires a fixtures file".into())
                })?;
                Some(Arc::new(ScriptedBackend::load(path)?))
            }
            BackendKind::Oracle => None,
        };
        Ok(BackendProvider {
            kind: cfg.kind,
            shared,
        })
    }

    /// Wraps an already-built backend (tests inject scripted fixtures
    /// this way).
    pub fn from_shared(backend: Arc<dyn TextBackend>) -> Self {
        BackendProvider {
            kind: BackendKind::Scripted,
            shared: Some(backend),
        }
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn for_task(&self, task: &TaskInstance) -> Result<Arc<dyn TextBackend>, BackendError> {
        match &self.shared {
            Some(backend) => Ok(Arc::clone(backend)),
            None => Ok(Arc::new(OracleBackend::for_task(task)?)),
        }
    }
}

pub(crate) fn validate_request(req: &GenerationRequest) -> Result<(), BackendError> {
    if req.prompt.is_empty() {
        return Err(BackendError::EmptyPrompt);
    }
    Ok(())
}
