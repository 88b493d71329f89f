//! Method orchestration: the three-level decomposition, the flat and
//! interleaved baselines, and the ablation variants, all behind one
//! `run_method` call that turns a task into a plan plus a full trace.
//!
//! Stages run strictly in order (later prompts depend on earlier
//! outputs); parallelism belongs across tasks, in the evaluation
//! harness. Stage parse failures degrade to empty outputs so batch
//! metrics stay well-defined; only backend errors propagate.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{Action, Plan, PlanStep, StepOrigin};
use crate::gateway::{BackendConfig, BackendError, BackendProvider, GenerationRequest, TextBackend};
use crate::goal::TaskInstance;
use crate::prompt::{
    parse_actions, parse_subgoals, parse_subtasks, render_action_prompt, render_flat_prompt,
    render_goal_prompt, render_react_prompt, render_task_prompt, task_templates, Level,
};
use crate::retrieval::Retriever;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mldt,
    Embodied,
    React,
    /// Three-level method without the goal stage: the whole goal enters
    /// task-level decomposition as one subgoal.
    MldtGoal,
    /// Without the task stage: subgoals go straight to the action stage.
    MldtTask,
    /// Pure in-context variant: three demonstrations per stage.
    MldtIcl,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mldt,
        Method::Embodied,
        Method::React,
        Method::MldtGoal,
        Method::MldtTask,
        Method::MldtIcl,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mldt => "mldt",
            Method::Embodied => "embodied",
            Method::React => "react",
            Method::MldtGoal => "mldt-goal",
            Method::MldtTask => "mldt-task",
            Method::MldtIcl => "mldt-icl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected one of mldt, embodied, react, mldt-goal, mldt-task, mldt-icl)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    /// Demonstrations retrieved per stage. Fine-tuned-style runs use 0;
    /// the in-context variant always uses 3.
    pub n_demos: usize,
    pub backend: BackendConfig,
}

impl MethodConfig {
    pub fn new(method: Method, backend: BackendConfig) -> Self {
        MethodConfig {
            method,
            n_demos: 0,
            backend,
        }
    }

    pub fn effective_demos(&self) -> usize {
        match self.method {
            Method::MldtIcl => 3,
            _ => self.n_demos,
        }
    }
}

/// One prompt/response exchange, with everything needed to re-render
/// the prompt without demonstrations later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub level: Level,
    /// The goal/subgoal/subtask text the stage was asked about.
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    pub prompt: String,
    pub raw_output: String,
    /// Parsed item texts: subgoals, subtasks, or action phrases.
    pub parsed: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<Action>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub skipped: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionTrace {
    pub task_id: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_stage: Option<StageRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub task_stages: Vec<StageRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub action_stages: Vec<StageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat_stage: Option<StageRecord>,
    /// Canonical text of the aggregated plan.
    pub plan_text: String,
}

impl DecompositionTrace {
    fn empty(task_id: &str, method: Method) -> Self {
        DecompositionTrace {
            task_id: task_id.to_string(),
            method,
            goal_stage: None,
            task_stages: Vec::new(),
            action_stages: Vec::new(),
            flat_stage: None,
            plan_text: String::new(),
        }
    }

    /// Stage records that produced actions, in aggregation order.
    pub fn action_records(&self) -> Vec<&StageRecord> {
        if let Some(flat) = &self.flat_stage {
            vec![flat]
        } else {
            self.action_stages.iter().collect()
        }
    }

    /// Every stage record in invocation order.
    pub fn all_records(&self) -> Vec<&StageRecord> {
        let mut records = Vec::new();
        if let Some(goal) = &self.goal_stage {
            records.push(goal);
        }
        records.extend(self.task_stages.iter());
        records.extend(self.action_stages.iter());
        if let Some(flat) = &self.flat_stage {
            records.push(flat);
        }
        records
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, serde_json::to_string_pretty(self).expect("trace serializes"))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

pub struct PipelineContext<'a> {
    pub retriever: &'a Retriever,
    pub provider: &'a BackendProvider,
    /// Sampling temperature for every stage request; 0 everywhere except
    /// teacher retries during corpus generation.
    pub temperature: f64,
}

impl<'a> PipelineContext<'a> {
    pub fn new(retriever: &'a Retriever, provider: &'a BackendProvider) -> Self {
        PipelineContext {
            retriever,
            provider,
            temperature: 0.0,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    fn generate(&self, backend: &dyn TextBackend, prompt: String) -> Result<String, BackendError> {
        let req = GenerationRequest::deterministic(prompt).with_temperature(self.temperature);
        backend.generate(&req)
    }
}

fn plan_from_stages(stages: &[StageRecord]) -> Plan {
    let steps: Vec<PlanStep> = stages
        .iter()
        .enumerate()
        .flat_map(|(stage, record)| {
            record.actions.iter().cloned().map(move |action| PlanStep {
                action,
                origin: StepOrigin::Model { stage },
            })
        })
        .collect();
    Plan { steps }
}

/// Runs the configured method on one task.
pub fn run_method(
    task: &TaskInstance,
    cfg: &MethodConfig,
    ctx: &PipelineContext<'_>,
) -> Result<(Plan, DecompositionTrace), BackendError> {
    if task.goal.predicates.is_empty() {
        return Ok((Plan::default(), DecompositionTrace::empty(&task.id, cfg.method)));
    }
    match cfg.method {
        Method::Mldt | Method::MldtGoal | Method::MldtTask | Method::MldtIcl => {
            run_decomposition(task, cfg, ctx)
        }
        Method::Embodied => run_single_stage(task, cfg, ctx, Level::Flat),
        Method::React => run_single_stage(task, cfg, ctx, Level::React),
    }
}

fn run_decomposition(
    task: &TaskInstance,
    cfg: &MethodConfig,
    ctx: &PipelineContext<'_>,
) -> Result<(Plan, DecompositionTrace), BackendError> {
    let backend = ctx.provider.for_task(task)?;
    let n = cfg.effective_demos();
    let observation = task.env.render_observation();
    let goal_text = task.goal.source_text.clone();
    let mut trace = DecompositionTrace::empty(&task.id, cfg.method);

    let subgoal_texts: Vec<String> = if cfg.method == Method::MldtGoal {
        // Goal stage skipped: the whole goal enters as one subgoal.
        vec![goal_text.clone()]
    } else {
        let demos = ctx.retriever.blocks(Level::Goal, &goal_text, n);
        let prompt = render_goal_prompt(&goal_text, &demos);
        let raw = ctx.generate(backend.as_ref(), prompt.clone())?;
        let subgoals = parse_subgoals(&raw).unwrap_or_default();
        let texts: Vec<String> = subgoals.into_iter().map(|s| s.text).collect();
        trace.goal_stage = Some(StageRecord {
            level: Level::Goal,
            query: goal_text.clone(),
            observation: None,
            prompt,
            raw_output: raw,
            parsed: texts.clone(),
            actions: Vec::new(),
            skipped: 0,
        });
        texts
    };

    let subtask_texts: Vec<String> = if cfg.method == Method::MldtTask {
        // Task stage skipped: subgoals go straight to the action stage.
        subgoal_texts
    } else {
        let mut collected = Vec::new();
        for subgoal in &subgoal_texts {
            let demos = ctx.retriever.blocks(Level::Task, subgoal, n);
            let prompt = render_task_prompt(subgoal, &observation, &demos, task_templates());
            let raw = ctx.generate(backend.as_ref(), prompt.clone())?;
            let subtasks = parse_subtasks(&raw).unwrap_or_default();
            let texts: Vec<String> = subtasks.into_iter().map(|s| s.text).collect();
            trace.task_stages.push(StageRecord {
                level: Level::Task,
                query: subgoal.clone(),
                observation: Some(observation.clone()),
                prompt,
                raw_output: raw,
                parsed: texts.clone(),
                actions: Vec::new(),
                skipped: 0,
            });
            collected.extend(texts);
        }
        collected
    };

    for subtask in &subtask_texts {
        let demos = ctx.retriever.blocks(Level::Action, subtask, n);
        let prompt = render_action_prompt(subtask, &demos);
        let raw = ctx.generate(backend.as_ref(), prompt.clone())?;
        let parsed = parse_actions(&raw).unwrap_or_default();
        trace.action_stages.push(StageRecord {
            level: Level::Action,
            query: subtask.clone(),
            observation: None,
            prompt,
            raw_output: raw,
            parsed: parsed.actions.iter().map(crate::prompt::format_action_phrase).collect(),
            actions: parsed.actions,
            skipped: parsed.skipped,
        });
    }

    let plan = plan_from_stages(&trace.action_stages);
    trace.plan_text = plan.to_text();
    Ok((plan, trace))
}

fn run_single_stage(
    task: &TaskInstance,
    cfg: &MethodConfig,
    ctx: &PipelineContext<'_>,
    level: Level,
) -> Result<(Plan, DecompositionTrace), BackendError> {
    let backend = ctx.provider.for_task(task)?;
    let n = cfg.effective_demos();
    let observation = task.env.render_observation();
    let goal_text = task.goal.source_text.clone();
    let demos = ctx.retriever.blocks(level, &goal_text, n);
    let prompt = match level {
        Level::React => render_react_prompt(&goal_text, &observation, &demos),
        _ => render_flat_prompt(&goal_text, &observation, &demos),
    };
    let raw = ctx.generate(backend.as_ref(), prompt.clone())?;
    let parsed = parse_actions(&raw).unwrap_or_default();

    let mut trace = DecompositionTrace::empty(&task.id, cfg.method);
    trace.flat_stage = Some(StageRecord {
        level,
        query: goal_text,
        observation: Some(observation),
        prompt,
        raw_output: raw,
        parsed: parsed.actions.iter().map(crate::prompt::format_action_phrase).collect(),
        actions: parsed.actions,
        skipped: parsed.skipped,
    });
    let plan = plan_from_stages(std::slice::from_ref(trace.flat_stage.as_ref().unwrap()));
    trace.plan_text = plan.to_text();
    Ok((plan, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{execute_plan_with_goal, fixtures, goal_satisfied, Relation};
    use crate::gateway::{BackendKind, ScriptedBackend};
    use crate::goal::{parse_goal_spec, DatasetTag};
    use crate::prompt::{format_actions, format_react};
    use crate::retrieval::{demos_from_tasks, DemoStore};
    use std::sync::Arc;

    fn fig1_task() -> TaskInstance {
        TaskInstance {
            id: "fig1".into(),
            env: fixtures::fig1_env(),
            goal: parse_goal_spec("put 1 plate in dishwasher").unwrap(),
            tag: DatasetTag::InDistribution,
        }
    }

    fn three_predicate_task() -> TaskInstance {
        let mut env = fixtures::fig1_env();
        fixtures::add_closed_fridge_with_apple(&mut env);
        fixtures::add_grabable(&mut env, "cup", "cup", "kitchentable", Relation::On);
        TaskInstance {
            id: "three".into(),
            env,
            goal: parse_goal_spec(
                "put 1 plate in dishwasher and put 1 apple on kitchentable and close fridge",
            )
            .unwrap(),
            tag: DatasetTag::InDistribution,
        }
    }

    fn oracle_ctx() -> (Retriever, BackendProvider) {
        let retriever = Retriever::new(DemoStore::default());
        let provider = BackendProvider::new(&BackendConfig {
            kind: BackendKind::Oracle,
            ..Default::default()
        })
        .unwrap();
        (retriever, provider)
    }

    fn assert_solves(task: &TaskInstance, plan: &Plan) {
        let result = execute_plan_with_goal(&task.env, plan, Some(&task.goal));
        assert!(result.executable, "{:?}", result.failure);
        assert_eq!(goal_satisfied(&result.final_env, &task.goal), Ok(true));
    }

    #[test]
    fn mldt_with_oracle_solves_fig1() {
        let task = fig1_task();
        let (retriever, provider) = oracle_ctx();
        let ctx = PipelineContext::new(&retriever, &provider);
        let cfg = MethodConfig::new(Method::Mldt, BackendConfig::default());
        let (plan, trace) = run_method(&task, &cfg, &ctx).unwrap();
        assert_eq!(plan.len(), 6);
        assert_eq!(trace.goal_stage.as_ref().unwrap().parsed.len(), 1);
        assert_eq!(trace.task_stages.len(), 1);
        assert_eq!(trace.action_stages.len(), 1);
        assert_solves(&task, &plan);
    }

    #[test]
    fn stage_count_law_holds() {
        let task = three_predicate_task();
        let (retriever, provider) = oracle_ctx();
        let ctx = PipelineContext::new(&retriever, &provider);
        let cfg = MethodConfig::new(Method::Mldt, BackendConfig::default());
        let (plan, trace) = run_method(&task, &cfg, &ctx).unwrap();

        assert_eq!(trace.goal_stage.as_ref().unwrap().parsed.len(), 3);
        assert_eq!(trace.task_stages.len(), 3);
        let n_actions: usize = trace.action_stages.iter().map(|s| s.actions.len()).sum();
        assert_eq!(plan.len(), n_actions);
        let n_subtasks: usize = trace.task_stages.iter().map(|s| s.parsed.len()).sum();
        assert_eq!(trace.action_stages.len(), n_subtasks);
        assert_solves(&task, &plan);
    }

    #[test]
    fn ablations_with_oracle_still_solve() {
        let task = three_predicate_task();
        let (retriever, provider) = oracle_ctx();
        let ctx = PipelineContext::new(&retriever, &provider);
        for method in [Method::MldtGoal, Method::MldtTask, Method::MldtIcl] {
            let cfg = MethodConfig::new(method, BackendConfig::default());
            let (plan, _) = run_method(&task, &cfg, &ctx).unwrap();
            assert_solves(&task, &plan);
        }
    }

    #[test]
    fn skipping_goal_stage_is_identity_on_single_predicate_tasks() {
        let task = fig1_task();
        let (retriever, provider) = oracle_ctx();
        let ctx = PipelineContext::new(&retriever, &provider);
        let (full, _) = run_method(&task, &MethodConfig::new(Method::Mldt, BackendConfig::default()), &ctx).unwrap();
        let (ablated, trace) =
            run_method(&task, &MethodConfig::new(Method::MldtGoal, BackendConfig::default()), &ctx).unwrap();
        assert_eq!(full.to_text(), ablated.to_text());
        assert!(trace.goal_stage.is_none());
    }

    #[test]
    fn embodied_uses_scripted_plan_verbatim() {
        let task = fig1_task();
        let plan_text = format_actions(&fixtures::fig1_plan().actions().cloned().collect::<Vec<_>>());
        let mut scripted = ScriptedBackend::new();
        let prompt = render_flat_prompt(
            &task.goal.source_text,
            &task.env.render_observation(),
            &[],
        );
        scripted.insert(&prompt, plan_text);
        let retriever = Retriever::new(DemoStore::default());
        let provider = BackendProvider::from_shared(Arc::new(scripted));
        let ctx = PipelineContext::new(&retriever, &provider);
        let (plan, trace) = run_method(
            &task,
            &MethodConfig::new(Method::Embodied, BackendConfig::default()),
            &ctx,
        )
        .unwrap();
        assert_eq!(plan.to_text(), fixtures::fig1_plan().to_text());
        assert!(trace.flat_stage.is_some());
        assert_solves(&task, &plan);
    }

    #[test]
    fn react_strips_reasoning_lines() {
        let task = fig1_task();
        let actions: Vec<Action> = fixtures::fig1_plan().actions().cloned().collect();
        let mut scripted = ScriptedBackend::new();
        let prompt = render_react_prompt(
            &task.goal.source_text,
            &task.env.render_observation(),
            &[],
        );
        scripted.insert(&prompt, format_react(&actions));
        let retriever = Retriever::new(DemoStore::default());
        let provider = BackendProvider::from_shared(Arc::new(scripted));
        let ctx = PipelineContext::new(&retriever, &provider);
        let (plan, _) = run_method(
            &task,
            &MethodConfig::new(Method::React, BackendConfig::default()),
            &ctx,
        )
        .unwrap();
        assert_eq!(plan.to_text(), fixtures::fig1_plan().to_text());
    }

    #[test]
    fn garbage_output_degrades_to_empty_plan() {
        let task = fig1_task();
        let mut scripted = ScriptedBackend::new();
        let prompt = render_flat_prompt(
            &task.goal.source_text,
            &task.env.render_observation(),
            &[],
        );
        scripted.insert(&prompt, "no actions here at all");
        let retriever = Retriever::new(DemoStore::default());
        let provider = BackendProvider::from_shared(Arc::new(scripted));
        let ctx = PipelineContext::new(&retriever, &provider);
        let (plan, trace) = run_method(
            &task,
            &MethodConfig::new(Method::Embodied, BackendConfig::default()),
            &ctx,
        )
        .unwrap();
        assert!(plan.is_empty());
        let stage = trace.flat_stage.unwrap();
        assert!(stage.parsed.is_empty());
        assert_eq!(stage.raw_output, "no actions here at all");
    }

    #[test]
    fn empty_goal_yields_empty_plan() {
        let mut task = fig1_task();
        task.goal = crate::goal::GoalSpec::empty();
        let (retriever, provider) = oracle_ctx();
        let ctx = PipelineContext::new(&retriever, &provider);
        let (plan, _) = run_method(
            &task,
            &MethodConfig::new(Method::Mldt, BackendConfig::default()),
            &ctx,
        )
        .unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn icl_variant_renders_three_demo_blocks() {
        let seed_tasks: Vec<TaskInstance> = (0..4)
            .map(|i| {
                let env = crate::env::generator::generate_env(
                    &crate::env::generator::GeneratorConfig::default(),
                    100 + i,
                )
;
                crate::longtasks::build_candidate(&env, 100 + i, &Default::default())
            })
            .collect();
        let retriever = Retriever::new(demos_from_tasks(&seed_tasks));
        let provider = BackendProvider::new(&BackendConfig {
            kind: BackendKind::Oracle,
            ..Default::default()
        })
        .unwrap();
        let ctx = PipelineContext::new(&retriever, &provider);
        let task = fig1_task();
        let cfg = MethodConfig::new(Method::MldtIcl, BackendConfig::default());
        assert_eq!(cfg.effective_demos(), 3);
        let (plan, trace) = run_method(&task, &cfg, &ctx).unwrap();
        assert_eq!(
            trace.goal_stage.as_ref().unwrap().prompt.matches("Example:").count(),
            3
        );
        assert_solves(&task, &plan);
    }

    #[test]
    fn trace_save_load_round_trip() {
        let task = fig1_task();
        let (retriever, provider) = oracle_ctx();
        let ctx = PipelineContext::new(&retriever, &provider);
        let (_, trace) = run_method(
            &task,
            &MethodConfig::new(Method::Mldt, BackendConfig::default()),
            &ctx,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.json");
        trace.save(&path).unwrap();
        assert_eq!(DecompositionTrace::load(&path).unwrap(), trace);
    }

    #[test]
    fn method_names_round_trip() {
        for method in Method::ALL {
            assert_eq!(method.as_str().parse::<Method>().unwrap(), method);
        }
        assert!("warp".parse::<Method>().is_err());
    }
}
