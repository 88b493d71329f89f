//! Action preconditions, effects, plan execution, and goal checking.
//!
//! Action arguments may be node ids or class tokens. A class token
//! resolves to the lowest-id suitable instance; when a goal is supplied,
//! instances already placed per that goal are deprioritized so that
//! multi-instance plans pick up the remaining objects.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Action, EnvError, EnvironmentGraph, NodeId, ObjectProperty, ObjectState, Plan,
    Relation, Verb,
};
use crate::goal::{GoalPredicate, GoalSpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ActionFailure {
    #[error("unknown object: {0}")]
    UnknownObject(String),
    #[error("no co-located instance of {0}")]
    ResolutionFailure(String),
    #[error("agent not co-located with {0}")]
    NotCoLocated(NodeId),
    #[error("container closed: {0}")]
    ContainerClosed(NodeId),
    #[error("hands full ({0} held, capacity {1})")]
    HandFull(usize, usize),
    #[error("{0} already held")]
    AlreadyHeld(NodeId),
    #[error("{0} is not grabable")]
    NotGrabable(NodeId),
    #[error("{0} is not openable")]
    NotOpenable(NodeId),
    #[error("{0} is not switchable")]
    NotSwitchable(NodeId),
    #[error("{0} is already {1}")]
    AlreadyInState(NodeId, ObjectState),
    #[error("{0} is not held")]
    NotHeld(String),
    #[error("{0} cannot contain objects")]
    NotContainer(NodeId),
    #[error("{0} cannot support objects")]
    NotSurface(NodeId),
}

/// An action whose arguments resolved to concrete node ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedAction {
    pub verb: Verb,
    pub arg1: NodeId,
    pub arg2: Option<NodeId>,
}

/// All node ids a goal-target token denotes: the exact id if it exists,
/// otherwise every instance of the class.
fn target_set(env: &EnvironmentGraph, token: &str) -> Vec<NodeId> {
    if env.nodes.contains_key(token) {
        return vec![token.to_string()];
    }
    env.instances_of_class(token)
        .into_iter()
        .cloned()
        .collect()
}

/// True when `id` already sits where some goal predicate wants an
/// instance of its class.
fn placed_per_goal(env: &EnvironmentGraph, id: &str, goal: &GoalSpec) -> bool {
    let Some(node) = env.node(id) else {
        return false;
    };
    let Some((parent, rel)) = env.parent_of(id) else {
        return false;
    };
    goal.predicates.iter().any(|p| match p {
        GoalPredicate::Inside { class, target, .. } => {
            rel == Relation::Inside
                && node.class_name == *class
                && target_set(env, target).iter().any(|t| t == parent)
        }
        GoalPredicate::On { class, target, .. } => {
            rel == Relation::On
                && node.class_name == *class
                && target_set(env, target).iter().any(|t| t == parent)
        }
        GoalPredicate::StateIs { .. } => false,
    })
}

/// Nodes a token can denote: exact id match plus every instance of the
/// class, ascending id.
fn name_candidates(env: &EnvironmentGraph, token: &str) -> Vec<NodeId> {
    env.nodes
        .iter()
        .filter(|(id, n)| *id == token || n.class_name == token)
        .map(|(id, _)| id.clone())
        .collect()
}

/// Resolves a token naming a placed object. A unique candidate resolves
/// directly so precondition failures stay precise; an ambiguous class
/// token picks among co-located instances, preferring ones not yet
/// placed per the goal, then lowest id.
fn resolve_placed_arg(
    env: &EnvironmentGraph,
    token: &str,
    require_co_location: bool,
    goal: Option<&GoalSpec>,
) -> Result<NodeId, ActionFailure> {
    let mut candidates = name_candidates(env, token);
    match candidates.len() {
        0 => Err(ActionFailure::UnknownObject(token.to_string())),
        1 => Ok(candidates.pop().unwrap()),
        _ => {
            if let Some(goal) = goal {
                candidates.sort_by_key(|id| (placed_per_goal(env, id, goal), id.clone()));
            }
            if require_co_location {
                candidates
                    .into_iter()
                    .find(|id| env.co_located(id))
                    .ok_or_else(|| ActionFailure::ResolutionFailure(token.to_string()))
            } else {
                Ok(candidates.into_iter().next().unwrap())
            }
        }
    }
}

fn resolve_held_arg(env: &EnvironmentGraph, token: &str) -> Result<NodeId, ActionFailure> {
    env.agent
        .held
        .iter()
        .find(|id| {
            *id == token || env.node(id).map(|n| n.class_name == token).unwrap_or(false)
        })
        .cloned()
        .ok_or_else(|| ActionFailure::NotHeld(token.to_string()))
}

/// Resolves arguments and checks every precondition of `action`.
pub fn check_action(env: &EnvironmentGraph, action: &Action) -> Result<ResolvedAction, ActionFailure> {
    check_action_with_goal(env, action, None)
}

pub fn check_action_with_goal(
    env: &EnvironmentGraph,
    action: &Action,
    goal: Option<&GoalSpec>,
) -> Result<ResolvedAction, ActionFailure> {
    let resolved = match action.verb {
        Verb::Walk => {
            let target = resolve_placed_arg(env, &action.arg1, false, goal)?;
            ResolvedAction {
                verb: Verb::Walk,
                arg1: target,
                arg2: None,
            }
        }
        Verb::Grab => {
            let target = resolve_placed_arg(env, &action.arg1, true, goal)?;
            if env.is_held(&target) {
                return Err(ActionFailure::AlreadyHeld(target));
            }
            let node = env.node(&target).expect("resolved id exists");
            if !node.has_property(ObjectProperty::Grabable) {
                return Err(ActionFailure::NotGrabable(target));
            }
            if !env.co_located(&target) {
                return Err(ActionFailure::NotCoLocated(target));
            }
            if let Some(container) = env.enclosing_container(&target) {
                if container.has_property(ObjectProperty::Openable)
                    && container.has_state(ObjectState::Closed)
                {
                    return Err(ActionFailure::ContainerClosed(container.id.clone()));
                }
            }
            if env.agent.held.len() >= env.hand_capacity {
                return Err(ActionFailure::HandFull(
                    env.agent.held.len(),
                    env.hand_capacity,
                ));
            }
            ResolvedAction {
                verb: Verb::Grab,
                arg1: target,
                arg2: None,
            }
        }
        Verb::Open | Verb::Close => {
            let target = resolve_placed_arg(env, &action.arg1, true, goal)?;
            let node = env.node(&target).expect("resolved id exists");
            if !node.has_property(ObjectProperty::Openable) {
                return Err(ActionFailure::NotOpenable(target));
            }
            if !env.co_located(&target) {
                return Err(ActionFailure::NotCoLocated(target));
            }
            let required = if action.verb == Verb::Open {
                ObjectState::Closed
            } else {
                ObjectState::Open
            };
            if !node.has_state(required) {
                let current = if action.verb == Verb::Open {
                    ObjectState::Open
                } else {
                    ObjectState::Closed
                };
                return Err(ActionFailure::AlreadyInState(target, current));
            }
            ResolvedAction {
                verb: action.verb,
                arg1: target,
                arg2: None,
            }
        }
        Verb::SwitchOn | Verb::SwitchOff => {
            let target = resolve_placed_arg(env, &action.arg1, true, goal)?;
            let node = env.node(&target).expect("resolved id exists");
            if !node.has_property(ObjectProperty::Switchable) {
                return Err(ActionFailure::NotSwitchable(target));
            }
            if !env.co_located(&target) {
                return Err(ActionFailure::NotCoLocated(target));
            }
            let required = if action.verb == Verb::SwitchOn {
                ObjectState::Off
            } else {
                ObjectState::On
            };
            if !node.has_state(required) {
                let current = if action.verb == Verb::SwitchOn {
                    ObjectState::On
                } else {
                    ObjectState::Off
                };
                return Err(ActionFailure::AlreadyInState(target, current));
            }
            ResolvedAction {
                verb: action.verb,
                arg1: target,
                arg2: None,
            }
        }
        Verb::PutIn | Verb::PutOn => {
            let held = resolve_held_arg(env, &action.arg1)?;
            let dest_token = action.arg2.as_deref().unwrap_or("");
            let dest = resolve_placed_arg(env, dest_token, true, goal)?;
            let dest_node = env.node(&dest).expect("resolved id exists");
            if !env.co_located(&dest) {
                return Err(ActionFailure::NotCoLocated(dest));
            }
            if action.verb == Verb::PutIn {
                if !dest_node.has_property(ObjectProperty::Containment) {
                    return Err(ActionFailure::NotContainer(dest));
                }
                if dest_node.has_property(ObjectProperty::Openable)
                    && dest_node.has_state(ObjectState::Closed)
                {
                    return Err(ActionFailure::ContainerClosed(dest));
                }
            } else if !dest_node.has_property(ObjectProperty::Support) {
                return Err(ActionFailure::NotSurface(dest));
            }
            ResolvedAction {
                verb: action.verb,
                arg1: held,
                arg2: Some(dest),
            }
        }
    };
    Ok(resolved)
}

/// True iff every precondition of `action` holds in `env`.
pub fn is_executable(env: &EnvironmentGraph, action: &Action) -> bool {
    check_action(env, action).is_ok()
}

fn set_state(env: &mut EnvironmentGraph, id: &str, remove: ObjectState, insert: ObjectState) {
    if let Some(node) = env.nodes.get_mut(id) {
        node.states.remove(&remove);
        node.states.insert(insert);
    }
}

fn apply_resolved(env: &mut EnvironmentGraph, resolved: &ResolvedAction) {
    match resolved.verb {
        Verb::Walk => {
            if let Some(room) = env.room_of(&resolved.arg1).cloned() {
                env.agent.location = room;
            }
            env.agent.at = Some(resolved.arg1.clone());
        }
        Verb::Grab => {
            env.remove_parent_edge(&resolved.arg1);
            env.agent.held.push(resolved.arg1.clone());
        }
        Verb::Open => set_state(env, &resolved.arg1, ObjectState::Closed, ObjectState::Open),
        Verb::Close => set_state(env, &resolved.arg1, ObjectState::Open, ObjectState::Closed),
        Verb::SwitchOn => set_state(env, &resolved.arg1, ObjectState::Off, ObjectState::On),
        Verb::SwitchOff => set_state(env, &resolved.arg1, ObjectState::On, ObjectState::Off),
        Verb::PutIn | Verb::PutOn => {
            let dest = resolved.arg2.clone().expect("putin/puton resolved arg2");
            env.agent.held.retain(|h| h != &resolved.arg1);
            let relation = if resolved.verb == Verb::PutIn {
                Relation::Inside
            } else {
                Relation::On
            };
            env.add_edge(&resolved.arg1, relation, &dest);
        }
    }
}

/// Applies one action, returning the successor state. Fails with the
/// precondition's failure reason when the action is not executable.
pub fn apply_action(
    env: &EnvironmentGraph,
    action: &Action,
) -> Result<EnvironmentGraph, ActionFailure> {
    apply_action_with_goal(env, action, None)
}

pub fn apply_action_with_goal(
    env: &EnvironmentGraph,
    action: &Action,
    goal: Option<&GoalSpec>,
) -> Result<EnvironmentGraph, ActionFailure> {
    let resolved = check_action_with_goal(env, action, goal)?;
    let mut next = env.clone();
    apply_resolved(&mut next, &resolved);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFailure {
    pub index: usize,
    pub action: Action,
    pub reason: String,
}

/// Outcome of running a plan: the executed prefix and the state it
/// produced. Failures are data, not errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionResult {
    pub executed_prefix_len: usize,
    pub final_env: EnvironmentGraph,
    pub executable: bool,
    pub failure: Option<StepFailure>,
}

/// Applies actions in order, stopping at the first non-executable one.
pub fn execute_plan(env: &EnvironmentGraph, plan: &Plan) -> ExecutionResult {
    execute_plan_with_goal(env, plan, None)
}

pub fn execute_plan_with_goal(
    env: &EnvironmentGraph,
    plan: &Plan,
    goal: Option<&GoalSpec>,
) -> ExecutionResult {
    let mut current = env.clone();
    for (index, step) in plan.steps.iter().enumerate() {
        match check_action_with_goal(&current, &step.action, goal) {
            Ok(resolved) => apply_resolved(&mut current, &resolved),
            Err(reason) => {
                return ExecutionResult {
                    executed_prefix_len: index,
                    final_env: current,
                    executable: false,
                    failure: Some(StepFailure {
                        index,
                        action: step.action.clone(),
                        reason: reason.to_string(),
                    }),
                }
            }
        }
    }
    ExecutionResult {
        executed_prefix_len: plan.len(),
        final_env: current,
        executable: true,
        failure: None,
    }
}

/// True iff every goal predicate holds. A predicate naming a class or
/// target with no instances at all is an error, not `false`.
pub fn goal_satisfied(env: &EnvironmentGraph, goal: &GoalSpec) -> Result<bool, EnvError> {
    for predicate in &goal.predicates {
        match predicate {
            GoalPredicate::Inside { class, target, count } => {
                if !placement_count_ok(env, class, target, Relation::Inside, *count)? {
                    return Ok(false);
                }
            }
            GoalPredicate::On { class, target, count } => {
                if !placement_count_ok(env, class, target, Relation::On, *count)? {
                    return Ok(false);
                }
            }
            GoalPredicate::StateIs { object, state } => {
                let targets = target_set(env, object);
                let id = targets
                    .first()
                    .ok_or_else(|| EnvError::UnsatisfiableGoal(object.clone()))?;
                let node = env.node(id).expect("target id exists");
                if !node.has_state(*state) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn placement_count_ok(
    env: &EnvironmentGraph,
    class: &str,
    target: &str,
    relation: Relation,
    count: usize,
) -> Result<bool, EnvError> {
    let instances = env.instances_of_class(class);
    if instances.is_empty() && !env.nodes.contains_key(class) {
        return Err(EnvError::UnsatisfiableGoal(class.to_string()));
    }
    let instances = if instances.is_empty() {
        vec![env.nodes.get_key_value(class).map(|(k, _)| k).unwrap()]
    } else {
        instances
    };
    let targets = target_set(env, target);
    if targets.is_empty() {
        return Err(EnvError::UnsatisfiableGoal(target.to_string()));
    }
    let placed = instances
        .iter()
        .filter(|id| match env.parent_of(id) {
            Some((parent, rel)) => rel == relation && targets.iter().any(|t| t == parent),
            None => false,
        })
        .count();
    Ok(placed >= count)
}

/// How many instances of `class` already sit in/on a target, used by the
/// planner to size the remaining work.
pub fn placement_count(
    env: &EnvironmentGraph,
    class: &str,
    target: &str,
    relation: Relation,
) -> usize {
    let targets = target_set(env, target);
    env.nodes
        .iter()
        .filter(|(id, n)| {
            (n.class_name == class || *id == class)
                && match env.parent_of(id) {
                    Some((parent, rel)) => rel == relation && targets.iter().any(|t| t == parent),
                    None => false,
                }
        })
        .count()
}

/// Node ids a goal-target token denotes (exact id, else class instances).
pub fn goal_target_ids(env: &EnvironmentGraph, token: &str) -> Vec<NodeId> {
    target_set(env, token)
}
