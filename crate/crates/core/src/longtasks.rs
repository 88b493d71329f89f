//! Long-horizon dataset construction: object extraction, goal
//! construction from a template, and complexity filtering by minimum
//! plan length.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    generator::{generate_env, GeneratorConfig},
    EnvError, EnvironmentGraph, NodeId, ObjectProperty,
};
use crate::goal::{goal_stats, DatasetStats, DatasetTag, GoalPredicate, GoalSpec, TaskInstance};
use crate::oracle::min_steps;

#[derive(Debug, Error)]
pub enum LongTasksError {
    #[error("empty dataset")]
    Empty,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("only {kept} of {want} candidates passed the step threshold after {tried} tries")]
    Exhausted { kept: usize, want: usize, tried: usize },
}

/// Goal-construction knobs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidateConfig {
    /// Cap on the per-class instance count written into a predicate.
    pub max_per_class: usize,
    /// When set, only these classes participate as grabables or targets.
    pub allow_list: Option<BTreeSet<String>>,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig {
            max_per_class: 3,
            allow_list: None,
        }
    }
}

fn allowed(allow: &Option<BTreeSet<String>>, class: &str) -> bool {
    allow.as_ref().map_or(true, |set| set.contains(class))
}

/// Grabable classes and goal objects (containers and surfaces) present
/// in the environment, both restricted to the allow-list.
pub fn extract_objects(
    env: &EnvironmentGraph,
    allow: &Option<BTreeSet<String>>,
) -> (BTreeSet<String>, BTreeSet<NodeId>) {
    let mut grabable_classes = BTreeSet::new();
    let mut goal_objects = BTreeSet::new();
    for (id, node) in &env.nodes {
        if !allowed(allow, &node.class_name) {
            continue;
        }
        if node.has_property(ObjectProperty::Grabable) {
            grabable_classes.insert(node.class_name.clone());
        }
        if node.has_property(ObjectProperty::Containment)
            || node.has_property(ObjectProperty::Support)
        {
            goal_objects.insert(id.clone());
        }
    }
    (grabable_classes, goal_objects)
}

/// Builds one candidate task: per grabable class, one randomly chosen
/// goal object and a `put k <class> in|on <target>` predicate, with `k`
/// the number of instances present (capped). Candidates are satisfiable
/// by construction.
pub fn build_candidate(env: &EnvironmentGraph, seed: u64, cfg: &CandidateConfig) -> TaskInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (classes, goal_objects) = extract_objects(env, &cfg.allow_list);
    let goal_objects: Vec<&NodeId> = goal_objects.iter().collect();

    let mut predicates = Vec::new();
    for class in &classes {
        if goal_objects.is_empty() {
            break;
        }
        let target = goal_objects[rng.gen_range(0..goal_objects.len())].clone();
        let target_node = env.node(&target).expect("goal object exists");
        let count = env
            .instances_of_class(class)
            .len()
            .min(cfg.max_per_class.max(1));
        let predicate = if target_node.has_property(ObjectProperty::Containment) {
            GoalPredicate::Inside {
                class: class.clone(),
                target,
                count,
            }
        } else {
            GoalPredicate::On {
                class: class.clone(),
                target,
                count,
            }
        };
        predicates.push(predicate);
    }

    TaskInstance {
        id: format!("task_{seed}"),
        env: env.clone(),
        goal: GoalSpec::from_predicates(predicates),
        tag: DatasetTag::LongTasks,
    }
}

/// Keeps candidates whose minimum plan strictly exceeds `threshold`
/// steps. Unsatisfiable candidates never pass.
pub fn filter_by_steps(candidates: Vec<TaskInstance>, threshold: usize) -> Vec<TaskInstance> {
    candidates
        .into_iter()
        .filter(|task| matches!(min_steps(&task.env, &task.goal), Ok(n) if n > threshold))
        .collect()
}

/// Full dataset-construction parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LongTasksParams {
    pub threshold: usize,
    pub count: usize,
    pub seed: u64,
    /// Candidates tried before giving up, per kept task.
    pub tries_per_task: usize,
    pub candidate: CandidateConfig,
    pub generator: GeneratorConfig,
    pub tag: DatasetTag,
}

impl Default for LongTasksParams {
    fn default() -> Self {
        LongTasksParams {
            threshold: 60,
            count: 100,
            seed: 0,
            tries_per_task: 50,
            candidate: CandidateConfig::default(),
            generator: GeneratorConfig::long_horizon(),
            tag: DatasetTag::LongTasks,
        }
    }
}

/// Generates environments and task goals until `count` candidates pass
/// the step threshold.
pub fn generate_dataset(params: &LongTasksParams) -> Result<Vec<TaskInstance>, LongTasksError> {
    let budget = params.tries_per_task.max(1) * params.count.max(1);
    let envs = (0..budget).map(|i| generate_env(&params.generator, params.seed.wrapping_add(i as u64)));
    dataset_from_envs(envs, params)
}

/// Same filtering loop over caller-supplied environments (e.g. loaded
/// from files); environments are reused cyclically with fresh goal seeds.
pub fn dataset_from_env_pool(
    pool: &[EnvironmentGraph],
    params: &LongTasksParams,
) -> Result<Vec<TaskInstance>, LongTasksError> {
    if pool.is_empty() {
        return Err(LongTasksError::Empty);
    }
    let budget = params.tries_per_task.max(1) * params.count.max(1);
    let envs = (0..budget).map(|i| pool[i % pool.len()].clone());
    dataset_from_envs(envs, params)
}

fn dataset_from_envs(
    envs: impl Iterator<Item = EnvironmentGraph>,
    params: &LongTasksParams,
) -> Result<Vec<TaskInstance>, LongTasksError> {
    let mut kept = Vec::with_capacity(params.count);
    let mut tried = 0;
    for (i, env) in envs.enumerate() {
        if kept.len() >= params.count {
            break;
        }
        tried += 1;
        let candidate_seed = params.seed.wrapping_add(i as u64);
        let mut task = build_candidate(&env, candidate_seed, &params.candidate);
        task.tag = params.tag;
        if matches!(min_steps(&task.env, &task.goal), Ok(n) if n > params.threshold) {
            kept.push(task);
        }
    }
    if kept.len() < params.count {
        return Err(LongTasksError::Exhausted {
            kept: kept.len(),
            want: params.count,
            tried,
        });
    }
    Ok(kept)
}

/// Dataset statistics with minimum steps supplied by the planner.
pub fn report_stats(tasks: &[TaskInstance]) -> Result<DatasetStats, LongTasksError> {
    let mut err = None;
    let stats = goal_stats(tasks, |task| match min_steps(&task.env, &task.goal) {
        Ok(n) => n,
        Err(e) => {
            err.get_or_insert(e);
            0
        }
    })
    .ok_or(LongTasksError::Empty)?;
    match err {
        Some(e) => Err(LongTasksError::Env(e)),
        None => Ok(stats),
    }
}
