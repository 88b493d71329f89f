//! Deterministic symbolic planner.
//!
//! Produces valid, near-minimal plans by a fixed per-predicate routine,
//! and exposes the structured decomposition (subgoals, single-instance
//! subtasks, per-subtask action segments) behind it. The plan for a goal
//! is exactly the concatenation of its subtask segments, so every layer
//! of the decomposition stays consistent with the flat plan.
//!
//! The planner always runs with hand capacity 1 so step counts do not
//! depend on simulator configuration.

use crate::env::{
    Action, EnvError, EnvironmentGraph, ObjectProperty, ObjectState, Plan, Relation, StepOrigin,
    Verb,
};
use crate::goal::{GoalPredicate, GoalSpec, Subgoal, Subtask};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSubtask {
    pub subtask: Subtask,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSubgoal {
    pub subgoal: Subgoal,
    pub subtasks: Vec<OracleSubtask>,
}

/// The full three-level answer for one task: one subgoal per goal
/// predicate, one subtask per object instance still to be handled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleDecomposition {
    pub subgoals: Vec<OracleSubgoal>,
}

impl OracleDecomposition {
    pub fn subtasks(&self) -> impl Iterator<Item = &OracleSubtask> {
        self.subgoals.iter().flat_map(|g| g.subtasks.iter())
    }

    pub fn plan(&self) -> Plan {
        let actions: Vec<Action> = self
            .subtasks()
            .flat_map(|t| t.actions.iter().cloned())
            .collect();
        Plan::from_actions(actions, StepOrigin::Oracle)
    }
}

/// Plans one task goal. Fails with `UnsatisfiableGoal` when the
/// environment lacks the objects a predicate needs.
pub fn oracle_plan(env: &EnvironmentGraph, goal: &GoalSpec) -> Result<Plan, EnvError> {
    oracle_decompose(env, goal).map(|d| d.plan())
}

/// Length of the oracle plan; the minimum-step estimate used for
/// dataset filtering.
pub fn min_steps(env: &EnvironmentGraph, goal: &GoalSpec) -> Result<usize, EnvError> {
    oracle_plan(env, goal).map(|p| p.len())
}

pub fn is_satisfiable(env: &EnvironmentGraph, goal: &GoalSpec) -> bool {
    oracle_decompose(env, goal).is_ok()
}

struct Planner {
    env: EnvironmentGraph,
}

impl Planner {
    fn apply(&mut self, actions: &mut Vec<Action>, action: Action) {
        // The routine only emits executable actions; applying them keeps
        // the scratch state honest for later predicates.
        self.env = crate::env::apply_action(&self.env, &action)
            .unwrap_or_else(|e| panic!("oracle emitted non-executable action {action}: {e}"));
        actions.push(action);
    }

    /// walk + grab with open/close bookkeeping on the source container.
    fn fetch(&mut self, actions: &mut Vec<Action>, instance: &str) {
        if self.env.is_held(instance) {
            return;
        }
        let (parent, _) = self
            .env
            .parent_of(instance)
            .map(|(p, r)| (p.clone(), r))
            .expect("instance to fetch has a parent");
        self.apply(actions, Action::new(Verb::Walk, parent.clone()));
        let reopened = self.open_if_closed(actions, &parent);
        self.apply(actions, Action::new(Verb::Grab, instance));
        if reopened {
            self.apply(actions, Action::new(Verb::Close, parent));
        }
    }

    fn open_if_closed(&mut self, actions: &mut Vec<Action>, id: &str) -> bool {
        let node = self.env.node(id).expect("node exists");
        if node.has_property(ObjectProperty::Openable) && node.has_state(ObjectState::Closed) {
            self.apply(actions, Action::new(Verb::Open, id));
            true
        } else {
            false
        }
    }

    /// Instances of `class` to move, lowest id first, skipping any that
    /// already sit in/on a goal target.
    fn pending_instances(
        &self,
        class: &str,
        targets: &[String],
        relation: Relation,
        needed: usize,
    ) -> Result<Vec<String>, EnvError> {
        let mut instances: Vec<String> = self
            .env
            .nodes
            .iter()
            .filter(|(id, n)| n.class_name == class || *id == class)
            .filter(|(id, _)| match self.env.parent_of(id) {
                Some((parent, rel)) => !(rel == relation && targets.iter().any(|t| t == parent)),
                None => true, // held
            })
            .map(|(id, _)| id.clone())
            .collect();
        instances.sort();
        if instances.len() < needed {
            return Err(EnvError::UnsatisfiableGoal(class.to_string()));
        }
        instances.truncate(needed);
        Ok(instances)
    }

    fn plan_placement(
        &mut self,
        class: &str,
        target: &str,
        count: usize,
        relation: Relation,
    ) -> Result<Vec<OracleSubtask>, EnvError> {
        let targets = crate::env::goal_target_ids(&self.env, target);
        let dest = targets
            .first()
            .cloned()
            .ok_or_else(|| EnvError::UnsatisfiableGoal(target.to_string()))?;
        if self
            .env
            .instances_of_class(class)
            .is_empty()
            && !self.env.nodes.contains_key(class)
        {
            return Err(EnvError::UnsatisfiableGoal(class.to_string()));
        }
        let placed = crate::env::placement_count(&self.env, class, target, relation);
        let needed = count.saturating_sub(placed);
        let instances = self.pending_instances(class, &targets, relation, needed)?;

        let mut subtasks = Vec::with_capacity(instances.len());
        let mut opened_dest = false;
        let total = instances.len();
        for (i, instance) in instances.iter().enumerate() {
            let mut actions = Vec::new();
            self.fetch(&mut actions, instance);
            self.apply(&mut actions, Action::new(Verb::Walk, dest.clone()));
            if relation == Relation::Inside && self.open_if_closed(&mut actions, &dest) {
                opened_dest = true;
            }
            let verb = if relation == Relation::Inside {
                Verb::PutIn
            } else {
                Verb::PutOn
            };
            self.apply(&mut actions, Action::with_two(verb, instance.clone(), dest.clone()));
            if i + 1 == total && opened_dest {
                self.apply(&mut actions, Action::new(Verb::Close, dest.clone()));
            }
            let predicate = match relation {
                Relation::Inside => GoalPredicate::Inside {
                    class: instance.clone(),
                    target: dest.clone(),
                    count: 1,
                },
                Relation::On => GoalPredicate::On {
                    class: instance.clone(),
                    target: dest.clone(),
                    count: 1,
                },
            };
            subtasks.push(OracleSubtask {
                subtask: Subtask {
                    text: predicate.canonical_text(),
                    predicate,
                },
                actions,
            });
        }
        Ok(subtasks)
    }

    fn plan_state(
        &mut self,
        object: &str,
        state: ObjectState,
    ) -> Result<Vec<OracleSubtask>, EnvError> {
        let targets = crate::env::goal_target_ids(&self.env, object);
        if targets.is_empty() {
            return Err(EnvError::UnsatisfiableGoal(object.to_string()));
        }
        if targets
            .iter()
            .any(|id| self.env.node(id).is_some_and(|n| n.has_state(state)))
        {
            return Ok(Vec::new()); // already satisfied
        }
        let needs = match state {
            ObjectState::Open | ObjectState::Closed => ObjectProperty::Openable,
            ObjectState::On | ObjectState::Off => ObjectProperty::Switchable,
        };
        let id = targets
            .iter()
            .find(|id| self.env.node(id).is_some_and(|n| n.has_property(needs)))
            .cloned()
            .ok_or_else(|| EnvError::UnsatisfiableGoal(object.to_string()))?;

        let verb = match state {
            ObjectState::Open => Verb::Open,
            ObjectState::Closed => Verb::Close,
            ObjectState::On => Verb::SwitchOn,
            ObjectState::Off => Verb::SwitchOff,
        };
        let mut actions = Vec::new();
        self.apply(&mut actions, Action::new(Verb::Walk, id.clone()));
        self.apply(&mut actions, Action::new(verb, id.clone()));
        let predicate = GoalPredicate::StateIs { object: id, state };
        Ok(vec![OracleSubtask {
            subtask: Subtask {
                text: predicate.canonical_text(),
                predicate,
            },
            actions,
        }])
    }
}

/// Decomposes a goal into one subgoal per predicate and one subtask per
/// object instance still to be handled; already-satisfied predicates
/// keep their subgoal and get no subtasks.
pub fn oracle_decompose(
    env: &EnvironmentGraph,
    goal: &GoalSpec,
) -> Result<OracleDecomposition, EnvError> {
    let mut scratch = env.clone();
    scratch.hand_capacity = 1;
    let mut planner = Planner { env: scratch };

    let mut subgoals = Vec::with_capacity(goal.predicates.len());
    for predicate in &goal.predicates {
        let subtasks = match predicate {
            GoalPredicate::Inside { class, target, count } => {
                planner.plan_placement(class, target, *count, Relation::Inside)?
            }
            GoalPredicate::On { class, target, count } => {
                planner.plan_placement(class, target, *count, Relation::On)?
            }
            GoalPredicate::StateIs { object, state } => planner.plan_state(object, *state)?,
        };
        subgoals.push(OracleSubgoal {
            subgoal: Subgoal {
                text: predicate.canonical_text(),
                spec: GoalSpec::from_predicates(vec![predicate.clone()]),
            },
            subtasks,
        });
    }
    Ok(OracleDecomposition { subgoals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::fixtures;
    use crate::env::{execute_plan, goal_satisfied, generator};
    use crate::goal::parse_goal_spec;

    #[test]
    fn fig1_plan_is_six_canonical_steps() {
        let env = fixtures::fig1_env();
        let goal = parse_goal_spec("put 1 plate in dishwasher").unwrap();
        let plan = oracle_plan(&env, &goal).unwrap();
        assert_eq!(
            plan.to_text(),
            "walk kitchentable\n\
             grab plate\n\
             walk dishwasher\n\
             open dishwasher\n\
             putin plate dishwasher\n\
             close dishwasher"
        );
        assert_eq!(min_steps(&env, &goal), Ok(6));
        let result = execute_plan(&env, &plan);
        assert!(result.executable);
        assert_eq!(goal_satisfied(&result.final_env, &goal), Ok(true));
    }

    #[test]
    fn satisfied_goal_needs_no_steps() {
        let env = fixtures::fig1_env();
        let goal = parse_goal_spec("put 1 plate on kitchentable").unwrap();
        assert_eq!(min_steps(&env, &goal), Ok(0));
        assert!(oracle_plan(&env, &goal).unwrap().is_empty());
        assert_eq!(min_steps(&env, &GoalSpec::empty()), Ok(0));
    }

    #[test]
    fn two_apples_batch_opens_fridge_once() {
        let mut env = fixtures::fig1_env();
        fixtures::add_closed_fridge_with_apple(&mut env);
        // Start both apples on the table so two trips are needed.
        env.remove_parent_edge("apple");
        env.add_edge("apple", crate::env::Relation::On, "kitchentable");
        fixtures::add_grabable(&mut env, "apple", "apple_2", "kitchentable", crate::env::Relation::On);

        let goal = parse_goal_spec("put 2 apples in fridge").unwrap();
        let plan = oracle_plan(&env, &goal).unwrap();
        assert_eq!(plan.len(), 10);
        let opens = plan.actions().filter(|a| a.verb == Verb::Open).count();
        let closes = plan.actions().filter(|a| a.verb == Verb::Close).count();
        assert_eq!((opens, closes), (1, 1));
        let result = execute_plan(&env, &plan);
        assert!(result.executable);
        assert_eq!(goal_satisfied(&result.final_env, &goal), Ok(true));
    }

    #[test]
    fn unsatisfiable_when_instances_missing() {
        let env = fixtures::fig1_env();
        let goal = parse_goal_spec("put 2 plates in dishwasher").unwrap();
        assert_eq!(
            oracle_plan(&env, &goal).unwrap_err(),
            EnvError::UnsatisfiableGoal("plate".into())
        );
    }

    #[test]
    fn decomposition_matches_flat_plan_and_goal_multiset() {
        let mut env = fixtures::fig1_env();
        fixtures::add_closed_fridge_with_apple(&mut env);
        fixtures::add_grabable(&mut env, "cup", "cup", "kitchentable", crate::env::Relation::On);
        let goal =
            parse_goal_spec("put 1 plate in dishwasher and put 1 cup on kitchentable and close fridge")
                .unwrap();
        let decomp = oracle_decompose(&env, &goal).unwrap();
        assert_eq!(decomp.subgoals.len(), 3);

        let mut union: Vec<GoalPredicate> = decomp
            .subgoals
            .iter()
            .flat_map(|g| g.subgoal.spec.predicates.clone())
            .collect();
        union.sort();
        assert_eq!(union, goal.predicate_multiset());

        let flat = decomp.plan();
        assert_eq!(flat, oracle_plan(&env, &goal).unwrap());
        let result = execute_plan(&env, &flat);
        assert!(result.executable);
        assert_eq!(goal_satisfied(&result.final_env, &goal), Ok(true));
    }

    #[test]
    fn fig1_decomposition_shape() {
        let env = fixtures::fig1_env();
        let goal = parse_goal_spec("put 1 plate in dishwasher").unwrap();
        let decomp = oracle_decompose(&env, &goal).unwrap();
        assert_eq!(decomp.subgoals.len(), 1);
        assert_eq!(decomp.subgoals[0].subtasks.len(), 1);
        assert_eq!(decomp.subgoals[0].subtasks[0].actions.len(), 6);
        assert_eq!(decomp.subgoals[0].subtasks[0].subtask.text, "put 1 plate in dishwasher");
    }

    #[test]
    fn plans_achieve_goals_on_random_envs() {
        let cfg = generator::GeneratorConfig {
            rooms: 3,
            grabable_classes: 4,
            max_instances_per_class: 2,
            ..Default::default()
        };
        for seed in 0..40 {
            let env = generator::generate_env(&cfg, seed);
            let task = crate::longtasks::build_candidate(
                &env,
                seed,
                &crate::longtasks::CandidateConfig::default(),
            );
            let plan = oracle_plan(&env, &task.goal).unwrap();
            let result = execute_plan(&env, &plan);
            assert!(result.executable, "seed {seed}: {:?}", result.failure);
            assert_eq!(goal_satisfied(&result.final_env, &task.goal), Ok(true), "seed {seed}");
        }
    }

    #[test]
    fn min_steps_monotone_under_goal_union() {
        let cfg = generator::GeneratorConfig {
            rooms: 2,
            grabable_classes: 3,
            max_instances_per_class: 2,
            ..Default::default()
        };
        for seed in 0..25 {
            let env = generator::generate_env(&cfg, seed);
            let task = crate::longtasks::build_candidate(
                &env,
                seed,
                &crate::longtasks::CandidateConfig::default(),
            );
            if task.goal.predicates.len() < 2 {
                continue;
            }
            let (left, right) = task.goal.predicates.split_at(task.goal.predicates.len() / 2);
            let g1 = GoalSpec::from_predicates(left.to_vec());
            let g2 = GoalSpec::from_predicates(right.to_vec());
            let both = min_steps(&env, &task.goal).unwrap();
            let a = min_steps(&env, &g1).unwrap();
            let b = min_steps(&env, &g2).unwrap();
            assert!(both >= a.max(b), "seed {seed}: {both} < max({a},{b})");
        }
    }

    #[test]
    fn determinism() {
        let mut env = fixtures::fig1_env();
        fixtures::add_closed_fridge_with_apple(&mut env);
        let goal = parse_goal_spec("put 1 apple in dishwasher and close fridge").unwrap();
        assert_eq!(oracle_plan(&env, &goal), oracle_plan(&env, &goal));
    }
}
