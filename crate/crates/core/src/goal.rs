//! Task goals: the canonical goal grammar, parsed predicates, task
//! instances, and per-dataset complexity statistics.
//!
//! Grammar, clauses joined by `,` or `and`:
//!
//! ```text
//! put <k> <class> in <target>     -> Inside(class, target, k)
//! put <k> <class> on <target>     -> On(class, target, k)
//! open <target> / close <target>  -> StateIs(target, OPEN/CLOSED)
//! switch on|off <target>          -> StateIs(target, ON/OFF)
//! ```
//!
//! Classes are written pluralized when `k > 1` ("put 2 apples in fridge")
//! and normalized back to the singular class token on parse.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvironmentGraph, ObjectState};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum GoalPredicate {
    Inside {
        class: String,
        target: String,
        count: usize,
    },
    On {
        class: String,
        target: String,
        count: usize,
    },
    StateIs {
        object: String,
        state: ObjectState,
    },
}

impl GoalPredicate {
    /// Number of object instances the predicate asks for (1 for states).
    pub fn object_count(&self) -> usize {
        match self {
            GoalPredicate::Inside { count, .. } | GoalPredicate::On { count, .. } => *count,
            GoalPredicate::StateIs { .. } => 1,
        }
    }

    /// The class (or object token) the predicate is about.
    pub fn object_class(&self) -> &str {
        match self {
            GoalPredicate::Inside { class, .. } | GoalPredicate::On { class, .. } => class,
            GoalPredicate::StateIs { object, .. } => object,
        }
    }

    pub fn canonical_text(&self) -> String {
        match self {
            GoalPredicate::Inside { class, target, count } => {
                format!("put {count} {} in {target}", pluralize(class, *count))
            }
            GoalPredicate::On { class, target, count } => {
                format!("put {count} {} on {target}", pluralize(class, *count))
            }
            GoalPredicate::StateIs { object, state } => match state {
                ObjectState::Open => format!("open {object}"),
                ObjectState::Closed => format!("close {object}"),
                ObjectState::On => format!("switch on {object}"),
                ObjectState::Off => format!("switch off {object}"),
            },
        }
    }
}

impl fmt::Display for GoalPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_text())
    }
}

fn pluralize(class: &str, count: usize) -> String {
    if count > 1 && !class.ends_with('s') {
        format!("{class}s")
    } else {
        class.to_string()
    }
}

fn singularize(token: &str, count: usize) -> String {
    if count > 1 && token.ends_with('s') && !token.ends_with("ss") {
        token[..token.len() - 1].to_string()
    } else {
        token.to_string()
    }
}

/// Conjunction of goal predicates plus the text it was parsed from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GoalSpec {
    pub predicates: Vec<GoalPredicate>,
    pub source_text: String,
}

impl GoalSpec {
    pub fn empty() -> Self {
        GoalSpec::default()
    }

    pub fn from_predicates(predicates: Vec<GoalPredicate>) -> Self {
        let mut spec = GoalSpec {
            predicates,
            source_text: String::new(),
        };
        spec.source_text = spec.canonical_text();
        spec
    }

    /// Canonical re-serialization; parsing it yields the same predicates.
    pub fn canonical_text(&self) -> String {
        self.predicates
            .iter()
            .map(GoalPredicate::canonical_text)
            .collect::<Vec<_>>()
            .join(" and ")
    }

    /// Total objects asked for across predicates.
    pub fn object_count(&self) -> usize {
        self.predicates.iter().map(GoalPredicate::object_count).sum()
    }

    /// Distinct classes (or object tokens) named by the predicates.
    pub fn object_variety(&self) -> usize {
        self.predicates
            .iter()
            .map(|p| p.object_class())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Predicates as a sorted multiset, for decomposition-coverage checks.
    pub fn predicate_multiset(&self) -> Vec<GoalPredicate> {
        let mut v = self.predicates.clone();
        v.sort();
        v
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed goal clause at offset {offset}: {clause:?}")]
pub struct MalformedGoal {
    pub offset: usize,
    pub clause: String,
}

/// Splits goal text into clauses on `,` and the standalone word `and`,
/// keeping each clause's byte offset for error reporting.
fn split_clauses(text: &str) -> Vec<(usize, &str)> {
    let mut clauses = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < text.len() {
        if bytes[i] == b',' {
            clauses.push((start, &text[start..i]));
            i += 1;
            start = i;
        } else if text[i..].starts_with("and")
            && (i == 0 || bytes[i - 1].is_ascii_whitespace())
            && (i + 3 == text.len() || bytes[i + 3].is_ascii_whitespace())
        {
            clauses.push((start, &text[start..i]));
            i += 3;
            start = i;
        } else {
            i += 1;
        }
    }
    clauses.push((start, &text[start..]));
    clauses
}

pub fn parse_goal_spec(text: &str) -> Result<GoalSpec, MalformedGoal> {
    let mut predicates = Vec::new();
    let mut saw_clause = false;
    for (offset, raw) in split_clauses(text) {
        let clause = raw.trim();
        if clause.is_empty() {
            continue;
        }
        saw_clause = true;
        predicates.push(parse_clause(clause).ok_or_else(|| MalformedGoal {
            offset: offset + (raw.len() - raw.trim_start().len()),
            clause: clause.to_string(),
        })?);
    }
    if !saw_clause {
        return Err(MalformedGoal {
            offset: 0,
            clause: text.to_string(),
        });
    }
    Ok(GoalSpec {
        predicates,
        source_text: text.to_string(),
    })
}

fn parse_clause(clause: &str) -> Option<GoalPredicate> {
    let tokens: Vec<&str> = clause.split_whitespace().collect();
    match tokens.as_slice() {
        ["put", k, class, rel @ ("in" | "on"), target] => {
            let count: usize = k.parse().ok().filter(|c| *c >= 1)?;
            let class = singularize(class, count);
            let target = (*target).to_string();
            Some(if *rel == "in" {
                GoalPredicate::Inside { class, target, count }
            } else {
                GoalPredicate::On { class, target, count }
            })
        }
        ["open", target] => Some(GoalPredicate::StateIs {
            object: (*target).to_string(),
            state: ObjectState::Open,
        }),
        ["close", target] => Some(GoalPredicate::StateIs {
            object: (*target).to_string(),
            state: ObjectState::Closed,
        }),
        ["switch", "on", target] => Some(GoalPredicate::StateIs {
            object: (*target).to_string(),
            state: ObjectState::On,
        }),
        ["switch", "off", target] => Some(GoalPredicate::StateIs {
            object: (*target).to_string(),
            state: ObjectState::Off,
        }),
        _ => None,
    }
}

/// One independent fragment of a task goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgoal {
    pub text: String,
    pub spec: GoalSpec,
}

/// A single-object directive: move or toggle exactly one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtask {
    pub text: String,
    pub predicate: GoalPredicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetTag {
    InDistribution,
    NovelScenes,
    NovelTasks,
    LongTasks,
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DatasetTag::InDistribution => "in_distribution",
            DatasetTag::NovelScenes => "novel_scenes",
            DatasetTag::NovelTasks => "novel_tasks",
            DatasetTag::LongTasks => "long_tasks",
        };
        f.write_str(s)
    }
}

/// One dataset row as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: String,
    pub env_file: String,
    pub goal: String,
    pub tag: DatasetTag,
}

/// A task with its environment loaded and goal parsed.
#[derive(Debug, Clone)]
pub struct TaskInstance {
    pub id: String,
    pub env: EnvironmentGraph,
    pub goal: GoalSpec,
    pub tag: DatasetTag,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    EnvJson {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("task {id}: {source}")]
    Goal {
        id: String,
        #[source]
        source: MalformedGoal,
    },
    #[error("task {id}: {source}")]
    Env {
        id: String,
        #[source]
        source: crate::env::EnvError,
    },
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(line).map_err(|source| DataError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(rows)
}

pub fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> Result<(), DataError> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("row serializes"));
        out.push('\n');
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| DataError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    fs::write(path, out).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a dataset JSONL file; `env_file` paths are resolved relative to
/// the dataset's directory.
pub fn load_dataset(path: &Path) -> Result<Vec<TaskInstance>, DataError> {
    let records: Vec<TaskRecord> = read_jsonl(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut tasks = Vec::with_capacity(records.len());
    for record in records {
        let env_path = base.join(&record.env_file);
        let env_text = fs::read_to_string(&env_path).map_err(|source| DataError::Io {
            path: env_path.clone(),
            source,
        })?;
        let env = EnvironmentGraph::from_json(&env_text).map_err(|source| DataError::EnvJson {
            path: env_path.clone(),
            source,
        })?;
        env.validate().map_err(|source| DataError::Env {
            id: record.id.clone(),
            source,
        })?;
        let goal = parse_goal_spec(&record.goal).map_err(|source| DataError::Goal {
            id: record.id.clone(),
            source,
        })?;
        tasks.push(TaskInstance {
            id: record.id,
            env,
            goal,
            tag: record.tag,
        });
    }
    Ok(tasks)
}

/// Complexity statistics over a dataset split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub avg_goals: f64,
    pub avg_min_steps: f64,
    pub avg_obj_count: f64,
    pub avg_obj_variety: f64,
}

/// Means over the given tasks; `min_steps_fn` supplies the per-task
/// minimum plan length. Returns `None` on an empty slice.
pub fn goal_stats<F>(instances: &[TaskInstance], mut min_steps_fn: F) -> Option<DatasetStats>
where
    F: FnMut(&TaskInstance) -> usize,
{
    if instances.is_empty() {
        return None;
    }
    let n = instances.len() as f64;
    let mut goals = 0usize;
    let mut steps = 0usize;
    let mut objects = 0usize;
    let mut variety = 0usize;
    for task in instances {
        goals += task.goal.predicates.len();
        steps += min_steps_fn(task);
        objects += task.goal.object_count();
        variety += task.goal.object_variety();
    }
    Some(DatasetStats {
        avg_goals: goals as f64 / n,
        avg_min_steps: steps as f64 / n,
        avg_obj_count: objects as f64 / n,
        avg_obj_variety: variety as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::fixtures;

    #[test]
    fn parses_fig1_goal() {
        let spec = parse_goal_spec("put 1 plate in dishwasher").unwrap();
        assert_eq!(
            spec.predicates,
            vec![GoalPredicate::Inside {
                class: "plate".into(),
                target: "dishwasher".into(),
                count: 1
            }]
        );
    }

    #[test]
    fn parses_state_clauses() {
        let spec = parse_goal_spec("close fridge").unwrap();
        assert_eq!(
            spec.predicates,
            vec![GoalPredicate::StateIs {
                object: "fridge".into(),
                state: ObjectState::Closed
            }]
        );
        let spec = parse_goal_spec("switch on faucet").unwrap();
        assert_eq!(
            spec.predicates,
            vec![GoalPredicate::StateIs {
                object: "faucet".into(),
                state: ObjectState::On
            }]
        );
    }

    #[test]
    fn parses_conjunction_and_normalizes_plural() {
        let spec =
            parse_goal_spec("put 2 apples in fridge and put 1 plate on kitchentable").unwrap();
        assert_eq!(spec.predicates.len(), 2);
        assert_eq!(spec.predicates[0].object_class(), "apple");
        assert_eq!(spec.predicates[0].object_count(), 2);
        let comma = parse_goal_spec("put 2 apples in fridge, put 1 plate on kitchentable").unwrap();
        assert_eq!(spec.predicates, comma.predicates);
    }

    #[test]
    fn parse_serialize_parse_is_stable() {
        let first = parse_goal_spec("put 2 apples in fridge, close fridge").unwrap();
        let canonical = first.canonical_text();
        let second = parse_goal_spec(&canonical).unwrap();
        assert_eq!(first.predicates, second.predicates);
        assert_eq!(second.canonical_text(), canonical);
    }

    #[test]
    fn malformed_goal_reports_offset() {
        let err = parse_goal_spec("put 1 plate in dishwasher and fly to moon").unwrap_err();
        assert_eq!(err.offset, 30);
        assert_eq!(err.clause, "fly to moon");
        assert!(parse_goal_spec("").is_err());
        assert!(parse_goal_spec("put zero plates in sink").is_err());
        assert!(parse_goal_spec("put 0 plate in sink").is_err());
    }

    #[test]
    fn stats_over_single_task() {
        let task = TaskInstance {
            id: "t0".into(),
            env: fixtures::fig1_env(),
            goal: parse_goal_spec("put 1 plate in dishwasher").unwrap(),
            tag: DatasetTag::InDistribution,
        };
        let stats = goal_stats(std::slice::from_ref(&task), |_| 6).unwrap();
        assert_eq!(stats.avg_goals, 1.0);
        assert_eq!(stats.avg_min_steps, 6.0);
        assert_eq!(stats.avg_obj_count, 1.0);
        assert_eq!(stats.avg_obj_variety, 1.0);
    }

    #[test]
    fn stats_empty_is_none() {
        assert!(goal_stats(&[], |_| 0).is_none());
    }

    #[test]
    fn variety_counts_distinct_classes() {
        let goal = parse_goal_spec("put 2 apples in fridge and put 1 apple on kitchentable and close fridge").unwrap();
        assert_eq!(goal.object_count(), 4);
        assert_eq!(goal.object_variety(), 2); // apple, fridge
    }
}
