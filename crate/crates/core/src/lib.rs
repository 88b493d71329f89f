//! Multi-level task decomposition planning over a symbolic household
//! simulator.
//!
//! The crate splits a household task goal three ways — goal level into
//! subgoals, task level into single-object subtasks, action level into
//! executable steps — with each level driven by a text-generation
//! backend. A deterministic symbolic planner doubles as the min-step
//! estimator for dataset construction and as a scripted stand-in
//! backend, so every flow runs end to end without a live model.

pub mod cli;
pub mod env;
pub mod gateway;
pub mod goal;
pub mod longtasks;
pub mod pipeline;
pub mod prompt;
pub mod retrieval;
pub mod oracle;

pub use env::{
    apply_action, execute_plan, goal_satisfied, is_executable, Action, EnvironmentGraph, Plan,
    Verb,
};
pub use goal::{parse_goal_spec, DatasetTag, GoalPredicate, GoalSpec, TaskInstance};
