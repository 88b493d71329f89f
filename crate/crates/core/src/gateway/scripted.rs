//! Fixture-backed backend: exact-match lookup on a normalized prompt
//! key. A fixture may carry a response sequence, consumed call by call,
//! to script flows like "fail once, then succeed" in corpus-generation
//! tests; the last response repeats once the sequence is exhausted.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{validate_request, BackendError, GenerationRequest, TextBackend};
use crate::goal::read_jsonl;

/// Whitespace-insensitive fixture key: trimmed, runs collapsed.
pub fn normalize_prompt(prompt: &str) -> String {
    prompt.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureRow {
    prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    completion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    completions: Option<Vec<String>>,
}

struct Entry {
    completions: Vec<String>,
    cursor: AtomicUsize,
}

#[derive(Default)]
pub struct ScriptedBackend {
    fixtures: HashMap<String, Entry>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend::default()
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let rows: Vec<FixtureRow> = read_jsonl(path)
            .map_err(|e| BackendError::Protocol(format!("fixtures: {e}")))?;
        let mut backend = ScriptedBackend::new();
        for row in rows {
            let completions = match (row.completion, row.completions) {
                (Some(single), None) => vec![single],
                (None, Some(many)) if !many.is_empty() => many,
                _ => {
                    return Err(BackendError::Protocol(format!(
                        "fixture for {:?} needs `completion` or non-empty `completions`",
                        row.prompt.chars().take(40).collect::<String>()
                    )))
                }
            };
            backend.insert_sequence(&row.prompt, completions);
        }
        Ok(backend)
    }

    pub fn insert(&mut self, prompt: &str, completion: impl Into<String>) {
        self.insert_sequence(prompt, vec![completion.into()]);
    }

    pub fn insert_sequence(&mut self, prompt: &str, completions: Vec<String>) {
        self.fixtures.insert(
            normalize_prompt(prompt),
            Entry {
                completions,
                cursor: AtomicUsize::new(0),
            },
        );
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl TextBackend for ScriptedBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        validate_request(req)?;
        let key = normalize_prompt(&req.prompt);
        let entry = self.fixtures.get(&key).ok_or_else(|| {
            let preview: String = key.chars().take(80).collect();
            BackendError::KeyMiss(format!("no fixture for prompt {preview:?}"))
        })?;
        let index = entry
            .cursor
            .fetch_add(1, Ordering::SeqCst)
            .min(entry.completions.len() - 1);
        Ok(entry.completions[index].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_lookup_after_whitespace_churn() {
        let mut backend = ScriptedBackend::new();
        backend.insert("Task goal:  put 1 plate in dishwasher", "1. put 1 plate in dishwasher");
        let req = GenerationRequest::deterministic("  Task goal: put 1 plate\nin dishwasher ");
        assert_eq!(
            backend.generate(&req).unwrap(),
            "1. put 1 plate in dishwasher"
        );
    }

    #[test]
    fn miss_is_key_miss() {
        let backend = ScriptedBackend::new();
        let err = backend
            .generate(&GenerationRequest::deterministic("anything"))
            .unwrap_err();
        assert!(matches!(err, BackendError::KeyMiss(_)));
    }

    #[test]
    fn sequences_are_consumed_in_order_and_sticky_at_end() {
        let mut backend = ScriptedBackend::new();
        backend.insert_sequence("p", vec!["first".into(), "second".into()]);
        let req = GenerationRequest::deterministic("p");
        assert_eq!(backend.generate(&req).unwrap(), "first");
        assert_eq!(backend.generate(&req).unwrap(), "second");
        assert_eq!(backend.generate(&req).unwrap(), "second");
    }
}
