//! Demonstration store and top-N retrieval by text similarity.
//!
//! The default metric is cosine over term-frequency vectors of
//! lowercased word tokens: deterministic, dependency-free, and good
//! enough to pull structurally similar goals to the front. A different
//! metric can be plugged into [`Retriever::with_similarity`].

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goal::{read_jsonl, write_jsonl, DataError, TaskInstance};
use crate::oracle::oracle_decompose;
use crate::prompt::{
    format_actions, format_react, format_subgoals, format_subtasks, parse_actions,
    parse_subgoals, parse_subtasks, DemoBlock, Level,
};

/// One stored in-context example for a decomposition level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub level: Level,
    /// The goal/subgoal/subtask text the example exemplifies; retrieval
    /// matches queries against this.
    pub key: String,
    pub input: String,
    pub output: String,
}

impl Demonstration {
    pub fn block(&self) -> DemoBlock {
        DemoBlock {
            input: self.input.clone(),
            output: self.output.clone(),
        }
    }
}

fn tf_vector(text: &str) -> HashMap<String, f64> {
    let mut counts = HashMap::new();
    for token in text.to_lowercase().split_whitespace() {
        *counts.entry(token.to_string()).or_insert(0.0) += 1.0;
    }
    counts
}

/// Cosine similarity of term-frequency vectors, in [0, 1]. Two empty
/// texts are identical (1); one empty text matches nothing (0).
pub fn similarity(a: &str, b: &str) -> f64 {
    let va = tf_vector(a);
    let vb = tf_vector(b);
    if va.is_empty() && vb.is_empty() {
        return 1.0;
    }
    if va.is_empty() || vb.is_empty() {
        return 0.0;
    }
    let dot: f64 = va
        .iter()
        .filter_map(|(tok, x)| vb.get(tok).map(|y| x * y))
        .sum();
    let na: f64 = va.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = vb.values().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

#[derive(Debug, Error)]
pub enum DemoStoreError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("demo {index} ({level:?}): output does not parse under the level grammar")]
    BadOutput { index: usize, level: Level },
}

/// Read-only after load; retrieval is safe to share across workers.
#[derive(Debug, Clone, Default)]
pub struct DemoStore {
    demos: Vec<Demonstration>,
}

impl DemoStore {
    pub fn new(demos: Vec<Demonstration>) -> Result<Self, DemoStoreError> {
        for (index, demo) in demos.iter().enumerate() {
            let ok = match demo.level {
                Level::Goal => parse_subgoals(&demo.output).is_ok(),
                Level::Task => parse_subtasks(&demo.output).is_ok(),
                Level::Action | Level::Flat | Level::React => parse_actions(&demo.output).is_ok(),
            };
            if !ok {
                return Err(DemoStoreError::BadOutput {
                    index,
                    level: demo.level,
                });
            }
        }
        Ok(DemoStore { demos })
    }

    pub fn load(path: &Path) -> Result<Self, DemoStoreError> {
        Self::new(read_jsonl(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        write_jsonl(&self.demos, path)
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn demos(&self) -> &[Demonstration] {
        &self.demos
    }
}

type SimilarityFn = dyn Fn(&str, &str) -> f64 + Send + Sync;

pub struct Retriever {
    store: DemoStore,
    sim: Box<SimilarityFn>,
}

impl Retriever {
    pub fn new(store: DemoStore) -> Self {
        Retriever {
            store,
            sim: Box::new(similarity),
        }
    }

    pub fn with_similarity(
        store: DemoStore,
        sim: impl Fn(&str, &str) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Retriever {
            store,
            sim: Box::new(sim),
        }
    }

    /// Top-`n` demonstrations for a level, most similar first; ties keep
    /// store insertion order. `n = 0` retrieves nothing.
    pub fn retrieve(&self, level: Level, query: &str, n: usize) -> Vec<&Demonstration> {
        if n == 0 {
            return Vec::new();
        }
        let mut scored: Vec<(usize, f64, &Demonstration)> = self
            .store
            .demos
            .iter()
            .enumerate()
            .filter(|(_, d)| d.level == level)
            .map(|(i, d)| (i, (self.sim)(&d.key, query), d))
            .collect();
        scored.sort_by(|(ia, sa, _), (ib, sb, _)| {
            sb.partial_cmp(sa).unwrap_or(std::cmp::Ordering::Equal).then(ia.cmp(ib))
        });
        scored.into_iter().take(n).map(|(_, _, d)| d).collect()
    }

    pub fn blocks(&self, level: Level, query: &str, n: usize) -> Vec<DemoBlock> {
        self.retrieve(level, query, n)
            .into_iter()
            .map(Demonstration::block)
            .collect()
    }
}

/// Builds a demonstration store from tasks the planner can solve:
/// one goal-, task-, action-, flat-, and react-level example per task.
pub fn demos_from_tasks(tasks: &[TaskInstance]) -> DemoStore {
    let mut demos = Vec::new();
    for task in tasks {
        let Ok(decomp) = oracle_decompose(&task.env, &task.goal) else {
            continue;
        };
        let goal_text = task.goal.canonical_text();
        let subgoal_texts: Vec<String> =
            decomp.subgoals.iter().map(|g| g.subgoal.text.clone()).collect();
        demos.push(Demonstration {
            level: Level::Goal,
            key: goal_text.clone(),
            input: goal_text.clone(),
            output: format_subgoals(&subgoal_texts),
        });
        if let Some(subgoal) = decomp.subgoals.iter().find(|g| !g.subtasks.is_empty()) {
            let subtask_texts: Vec<String> = subgoal
                .subtasks
                .iter()
                .map(|t| t.subtask.text.clone())
                .collect();
            demos.push(Demonstration {
                level: Level::Task,
                key: subgoal.subgoal.text.clone(),
                input: subgoal.subgoal.text.clone(),
                output: format_subtasks(&subtask_texts),
            });
            let subtask = &subgoal.subtasks[0];
            demos.push(Demonstration {
                level: Level::Action,
                key: subtask.subtask.text.clone(),
                input: subtask.subtask.text.clone(),
                output: format_actions(&subtask.actions),
            });
        }
        let plan = decomp.plan();
        if !plan.is_empty() {
            let actions: Vec<_> = plan.actions().cloned().collect();
            demos.push(Demonstration {
                level: Level::Flat,
                key: goal_text.clone(),
                input: goal_text.clone(),
                output: format_actions(&actions),
            });
            demos.push(Demonstration {
                level: Level::React,
                key: goal_text.clone(),
                input: goal_text,
                output: format_react(&actions),
            });
        }
    }
    DemoStore::new(demos).expect("planner-derived demos parse under their grammars")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo(level: Level, key: &str) -> Demonstration {
        Demonstration {
            level,
            key: key.to_string(),
            input: key.to_string(),
            output: match level {
                Level::Goal => format!("1. {key}"),
                Level::Task => format!("Subtask 1: {key}"),
                _ => "walk to kitchentable".to_string(),
            },
        }
    }

    #[test]
    fn identical_and_disjoint_similarity() {
        assert_eq!(similarity("grab the plate", "grab the plate"), 1.0);
        assert_eq!(similarity("alpha beta", "gamma delta"), 0.0);
        assert_eq!(similarity("", ""), 1.0);
        assert_eq!(similarity("alpha", ""), 0.0);
    }

    #[test]
    fn similarity_matches_hand_computation() {
        // Shared tokens: put, in, dishwasher -> dot 3; norms sqrt(5) each.
        let sim = similarity("put 1 plate in dishwasher", "put 2 plates in dishwasher");
        assert!((sim - 0.6).abs() < 1e-9, "{sim}");
    }

    #[test]
    fn retrieve_zero_is_empty() {
        let store = DemoStore::new(vec![demo(Level::Goal, "put 1 plate in dishwasher")]).unwrap();
        let retriever = Retriever::new(store);
        assert!(retriever.retrieve(Level::Goal, "anything", 0).is_empty());
    }

    #[test]
    fn retrieve_full_store_when_n_covers_it() {
        let store = DemoStore::new(vec![
            demo(Level::Goal, "put 1 plate in dishwasher"),
            demo(Level::Goal, "close fridge"),
            demo(Level::Goal, "switch on tv"),
        ])
        .unwrap();
        let retriever = Retriever::new(store);
        assert_eq!(retriever.retrieve(Level::Goal, "put 1 cup in sink", 3).len(), 3);
    }

    #[test]
    fn retrieve_top_n_matches_brute_force_sort() {
        let keys = [
            "put 1 plate in dishwasher",
            "put 2 apples in fridge",
            "close fridge",
            "put 1 cup in dishwasher",
            "switch on tv",
        ];
        let store = DemoStore::new(keys.iter().map(|k| demo(Level::Goal, k)).collect()).unwrap();
        let retriever = Retriever::new(store);
        let query = "put 1 plate in fridge";

        let mut brute: Vec<(usize, f64)> = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (i, similarity(k, query)))
            .collect();
        brute.sort_by(|(ia, sa), (ib, sb)| sb.partial_cmp(sa).unwrap().then(ia.cmp(ib)));

        let got: Vec<&str> = retriever
            .retrieve(Level::Goal, query, 2)
            .iter()
            .map(|d| d.key.as_str())
            .collect();
        let want: Vec<&str> = brute.iter().take(2).map(|(i, _)| keys[*i]).collect();
        assert_eq!(got, want);

        let scores: Vec<f64> = retriever
            .retrieve(Level::Goal, query, 5)
            .iter()
            .map(|d| similarity(&d.key, query))
            .collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn level_filter_applies() {
        let store = DemoStore::new(vec![
            demo(Level::Goal, "put 1 plate in dishwasher"),
            demo(Level::Task, "put 1 plate in dishwasher"),
        ])
        .unwrap();
        let retriever = Retriever::new(store);
        assert_eq!(retriever.retrieve(Level::Task, "put 1 plate in dishwasher", 5).len(), 1);
    }

    #[test]
    fn store_rejects_malformed_outputs() {
        let bad = Demonstration {
            level: Level::Goal,
            key: "k".into(),
            input: "k".into(),
            output: "not a numbered list".into(),
        };
        assert!(matches!(
            DemoStore::new(vec![bad]),
            Err(DemoStoreError::BadOutput { index: 0, .. })
        ));
    }

    #[test]
    fn oracle_demos_cover_all_levels() {
        let task = TaskInstance {
            id: "t".into(),
            env: crate::env::fixtures::fig1_env(),
            goal: crate::goal::parse_goal_spec("put 1 plate in dishwasher").unwrap(),
            tag: crate::goal::DatasetTag::InDistribution,
        };
        let store = demos_from_tasks(&[task]);
        assert_eq!(store.len(), 5);
        let retriever = Retriever::new(store);
        for level in [Level::Goal, Level::Task, Level::Action, Level::Flat, Level::React] {
            assert_eq!(retriever.retrieve(level, "put 1 plate in dishwasher", 3).len(), 1);
        }
    }
}
