//! Planner-backed backend: answers any decomposition prompt for one
//! task by formatting the symbolic planner's decomposition in the
//! canonical output grammar. The level is read off the prompt's
//! template marker, the query from the template's anchor line.

use super::{validate_request, BackendError, GenerationRequest, TextBackend};
use crate::goal::{parse_goal_spec, TaskInstance};
use crate::oracle::{oracle_decompose, OracleDecomposition};
use crate::prompt::{
    extract_query, format_actions, format_react, format_subgoals, format_subtasks, Level,
};

pub struct OracleBackend {
    goal_multiset: Vec<crate::goal::GoalPredicate>,
    decomposition: OracleDecomposition,
}

impl OracleBackend {
    pub fn for_task(task: &TaskInstance) -> Result<Self, BackendError> {
        let decomposition = oracle_decompose(&task.env, &task.goal).map_err(|e| {
            BackendError::KeyMiss(format!("planner cannot answer for this task: {e}"))
        })?;
        Ok(OracleBackend {
            goal_multiset: task.goal.predicate_multiset(),
            decomposition,
        })
    }

    fn answer_goal(&self, query: &str) -> Result<String, BackendError> {
        let spec = parse_goal_spec(query)
            .map_err(|e| BackendError::KeyMiss(format!("unparseable goal query: {e}")))?;
        if spec.predicate_multiset() != self.goal_multiset {
            return Err(BackendError::KeyMiss(format!(
                "goal query {query:?} does not match the planned task"
            )));
        }
        let texts: Vec<String> = self
            .decomposition
            .subgoals
            .iter()
            .map(|g| g.subgoal.text.clone())
            .collect();
        Ok(format_subgoals(&texts))
    }

    fn answer_task(&self, query: &str) -> Result<String, BackendError> {
        let spec = parse_goal_spec(query)
            .map_err(|e| BackendError::KeyMiss(format!("unparseable subgoal query: {e}")))?;
        let mut used = vec![false; self.decomposition.subgoals.len()];
        let mut texts = Vec::new();
        for predicate in &spec.predicates {
            let index = self
                .decomposition
                .subgoals
                .iter()
                .enumerate()
                .position(|(i, g)| {
                    !used[i] && g.subgoal.spec.predicates.first() == Some(predicate)
                })
                .ok_or_else(|| {
                    BackendError::KeyMiss(format!("subgoal {predicate} not part of the task"))
                })?;
            used[index] = true;
            texts.extend(
                self.decomposition.subgoals[index]
                    .subtasks
                    .iter()
                    .map(|t| t.subtask.text.clone()),
            );
        }
        Ok(format_subtasks(&texts))
    }

    fn answer_action(&self, query: &str) -> Result<String, BackendError> {
        let spec = parse_goal_spec(query)
            .map_err(|e| BackendError::KeyMiss(format!("unparseable subtask query: {e}")))?;
        let predicate = spec
            .predicates
            .first()
            .ok_or_else(|| BackendError::KeyMiss("empty subtask query".into()))?;
        // Exact subtask first; otherwise a whole subgoal (the ablation
        // that skips task-level decomposition sends subgoals here).
        if let Some(subtask) = self
            .decomposition
            .subtasks()
            .find(|t| &t.subtask.predicate == predicate)
        {
            return Ok(format_actions(&subtask.actions));
        }
        if let Some(subgoal) = self
            .decomposition
            .subgoals
            .iter()
            .find(|g| g.subgoal.spec.predicates.first() == Some(predicate))
        {
            let actions: Vec<_> = subgoal
                .subtasks
                .iter()
                .flat_map(|t| t.actions.iter().cloned())
                .collect();
            return Ok(format_actions(&actions));
        }
        Err(BackendError::KeyMiss(format!(
            "subtask {predicate} not part of the task"
        )))
    }
}

impl TextBackend for OracleBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        validate_request(req)?;
        let level = Level::detect(&req.prompt)
            .ok_or_else(|| BackendError::KeyMiss("prompt has no level marker".into()))?;
        let query = extract_query(&req.prompt, level)
            .ok_or_else(|| BackendError::KeyMiss("prompt has no query anchor".into()))?;
        let actions: Vec<_> = self.decomposition.plan().actions().cloned().collect();
        match level {
            Level::Goal => self.answer_goal(&query),
            Level::Task => self.answer_task(&query),
            Level::Action => self.answer_action(&query),
            Level::Flat => Ok(format_actions(&actions)),
            Level::React => Ok(format_react(&actions)),
        }
    }
}
