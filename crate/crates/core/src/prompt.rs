//! Prompt templates and the parsers that pull structured results back
//! out of raw model text.
//!
//! Templates are versioned text files compiled into the binary, so
//! corpus generation and inference always share the same bytes. Each
//! template opens with a `### <level>` header line that doubles as a
//! machine-detectable level marker. The parsers are total: any byte
//! string yields either parsed items or `ParseEmpty`, never a panic.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Verb};
use crate::goal::{parse_goal_spec, Subgoal, Subtask};

const GOAL_TEMPLATE: &str = include_str!("../templates/goal.txt");
const TASK_TEMPLATE: &str = include_str!("../templates/task.txt");
const ACTION_TEMPLATE: &str = include_str!("../templates/action.txt");
const FLAT_TEMPLATE: &str = include_str!("../templates/flat.txt");
const REACT_TEMPLATE: &str = include_str!("../templates/react.txt");

/// Decomposition level a prompt or output belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Goal,
    Task,
    Action,
    /// Single prompt, whole plan as output.
    Flat,
    /// Single prompt, interleaved reasoning and actions.
    React,
}

impl Level {
    pub fn marker(&self) -> &'static str {
        match self {
            Level::Goal => "### goal-level decomposition",
            Level::Task => "### task-level decomposition",
            Level::Action => "### action-level decomposition",
            Level::Flat => "### full task planning",
            Level::React => "### interleaved reasoning and acting",
        }
    }

    /// Which level a rendered prompt encodes.
    pub fn detect(prompt: &str) -> Option<Level> {
        let header = prompt.lines().find(|l| l.starts_with("### "))?;
        [
            Level::Goal,
            Level::Task,
            Level::Action,
            Level::Flat,
            Level::React,
        ]
        .into_iter()
        .find(|lvl| header.trim() == lvl.marker())
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Goal => "goal",
            Level::Task => "task",
            Level::Action => "action",
            Level::Flat => "flat",
            Level::React => "react",
        }
    }
}

/// One in-context example, already rendered to its input/output texts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoBlock {
    pub input: String,
    pub output: String,
}

fn render_demos(demos: &[DemoBlock]) -> String {
    let mut out = String::new();
    for demo in demos {
        out.push_str("Example:\nInput: ");
        out.push_str(&demo.input);
        out.push_str("\nOutput:\n");
        out.push_str(&demo.output);
        out.push_str("\n\n");
    }
    out
}

/// Subtask patterns the planner understands, shown in task-level prompts.
pub fn task_templates() -> &'static str {
    "put 1 <object> in <container>\n\
     put 1 <object> on <surface>\n\
     open <object>\n\
     close <object>\n\
     switch on <object>\n\
     switch off <object>"
}

pub fn render_goal_prompt(goal_text: &str, demos: &[DemoBlock]) -> String {
    GOAL_TEMPLATE
        .replace("{demos}", &render_demos(demos))
        .replace("{goal}", goal_text)
}

pub fn render_task_prompt(
    subgoal_text: &str,
    observation: &str,
    demos: &[DemoBlock],
    templates: &str,
) -> String {
    TASK_TEMPLATE
        .replace("{task_templates}", templates)
        .replace("{observation}", observation)
        .replace("{demos}", &render_demos(demos))
        .replace("{subgoal}", subgoal_text)
}

pub fn render_action_prompt(subtask_text: &str, demos: &[DemoBlock]) -> String {
    ACTION_TEMPLATE
        .replace("{demos}", &render_demos(demos))
        .replace("{subtask}", subtask_text)
}

pub fn render_flat_prompt(goal_text: &str, observation: &str, demos: &[DemoBlock]) -> String {
    FLAT_TEMPLATE
        .replace("{observation}", observation)
        .replace("{demos}", &render_demos(demos))
        .replace("{goal}", goal_text)
}

pub fn render_react_prompt(goal_text: &str, observation: &str, demos: &[DemoBlock]) -> String {
    REACT_TEMPLATE
        .replace("{observation}", observation)
        .replace("{demos}", &render_demos(demos))
        .replace("{goal}", goal_text)
}

/// The query text a rendered prompt asks about. Demos may contain the
/// same anchors, so the last occurrence wins.
pub fn extract_query(prompt: &str, level: Level) -> Option<String> {
    let anchor = match level {
        Level::Goal | Level::Flat | Level::React => "Task goal: ",
        Level::Task => "Subgoal: ",
        Level::Action => "Subtask: ",
    };
    prompt
        .lines()
        .rev()
        .find_map(|line| line.strip_prefix(anchor))
        .map(|s| s.trim().to_string())
}

/// Raised when a parser finds nothing usable; downstream treats this as
/// a failed stage, not a crash.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("no parseable items in model output")]
pub struct ParseEmpty;

fn numbered_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\d+[.)]\s*(.+)$").unwrap())
}

fn subtask_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*Subtask\s*\d+\s*:\s*(.+)$").unwrap())
}

fn think_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*Think\s*:").unwrap())
}

/// Extracts `1. <subgoal>` lines. Non-matching lines (chatter) are
/// ignored; an unparseable subgoal keeps its text with an empty spec.
pub fn parse_subgoals(text: &str) -> Result<Vec<Subgoal>, ParseEmpty> {
    let subgoals: Vec<Subgoal> = text
        .lines()
        .filter_map(|line| numbered_line_re().captures(line))
        .map(|cap| {
            let text = cap[1].trim().to_string();
            let spec = parse_goal_spec(&text).unwrap_or_default();
            Subgoal { text, spec }
        })
        .filter(|s| !s.text.is_empty())
        .collect();
    if subgoals.is_empty() {
        Err(ParseEmpty)
    } else {
        Ok(subgoals)
    }
}

/// Extracts `Subtask <n>: <text>` lines, ignoring `Think:` lines.
pub fn parse_subtasks(text: &str) -> Result<Vec<Subtask>, ParseEmpty> {
    let subtasks: Vec<Subtask> = text
        .lines()
        .filter(|line| !think_line_re().is_match(line))
        .filter_map(|line| subtask_line_re().captures(line))
        .filter_map(|cap| {
            let text = cap[1].trim().to_string();
            let spec = parse_goal_spec(&text).ok()?;
            let predicate = spec.predicates.into_iter().next()?;
            Some(Subtask { text, predicate })
        })
        .collect();
    if subtasks.is_empty() {
        Err(ParseEmpty)
    } else {
        Ok(subtasks)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedActions {
    pub actions: Vec<Action>,
    /// Lines that looked like content but matched no verb form.
    pub skipped: usize,
}

fn strip_numbering(line: &str) -> &str {
    match numbered_line_re().captures(line) {
        Some(cap) => cap.get(1).map(|m| m.as_str()).unwrap_or(line),
        None => line,
    }
}

/// One action per line via the verb phrase table; canonical
/// `verb arg1[ arg2]` lines are accepted too. Unknown-verb lines are
/// skipped and counted rather than failing the parse.
pub fn parse_actions(text: &str) -> Result<ParsedActions, ParseEmpty> {
    let mut parsed = ParsedActions::default();
    for raw in text.lines() {
        let line = strip_numbering(raw).trim();
        if line.is_empty() || think_line_re().is_match(line) {
            continue;
        }
        match parse_action_phrase(line) {
            Some(action) => parsed.actions.push(action),
            None => parsed.skipped += 1,
        }
    }
    if parsed.actions.is_empty() {
        Err(ParseEmpty)
    } else {
        Ok(parsed)
    }
}

fn parse_action_phrase(line: &str) -> Option<Action> {
    let lowered = line.to_lowercase();
    let tokens: Vec<&str> = lowered
        .split_whitespace()
        .filter(|t| !matches!(*t, "the" | "a" | "an"))
        .collect();
    match tokens.as_slice() {
        ["walk", "to", x] | ["walk", x] => Some(Action::new(Verb::Walk, *x)),
        ["grab", x] => Some(Action::new(Verb::Grab, *x)),
        ["open", x] => Some(Action::new(Verb::Open, *x)),
        ["close", x] => Some(Action::new(Verb::Close, *x)),
        ["put", x, "in", y] | ["putin", x, y] => Some(Action::with_two(Verb::PutIn, *x, *y)),
        ["put", x, "on", y] | ["puton", x, y] => Some(Action::with_two(Verb::PutOn, *x, *y)),
        ["switch", "on", x] | ["switchon", x] => Some(Action::new(Verb::SwitchOn, *x)),
        ["switch", "off", x] | ["switchoff", x] => Some(Action::new(Verb::SwitchOff, *x)),
        _ => None,
    }
}

/// Canonical goal-level output: a numbered subgoal list.
pub fn format_subgoals(subgoal_texts: &[String]) -> String {
    subgoal_texts
        .iter()
        .enumerate()
        .map(|(i, text)| format!("{}. {}", i + 1, text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Canonical task-level output: interleaved reasoning and subtask lines.
pub fn format_subtasks(subtask_texts: &[String]) -> String {
    subtask_texts
        .iter()
        .enumerate()
        .map(|(i, text)| format!("Think: the next step is to {text}.\nSubtask {}: {text}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Canonical action-level output: one verb phrase per line.
pub fn format_actions(actions: &[Action]) -> String {
    actions
        .iter()
        .map(format_action_phrase)
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn format_action_phrase(action: &Action) -> String {
    let arg2 = action.arg2.as_deref().unwrap_or("");
    match action.verb {
        Verb::Walk => format!("walk to {}", action.arg1),
        Verb::Grab => format!("grab {}", action.arg1),
        Verb::Open => format!("open {}", action.arg1),
        Verb::Close => format!("close {}", action.arg1),
        Verb::PutIn => format!("put {} in {arg2}", action.arg1),
        Verb::PutOn => format!("put {} on {arg2}", action.arg1),
        Verb::SwitchOn => format!("switch on {}", action.arg1),
        Verb::SwitchOff => format!("switch off {}", action.arg1),
    }
}

/// Canonical interleaved output: a reasoning line before every action.
pub fn format_react(actions: &[Action]) -> String {
    actions
        .iter()
        .map(|a| {
            let phrase = format_action_phrase(a);
            format!("Think: I will {phrase}.\n{phrase}")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo(input: &str, output: &str) -> DemoBlock {
        DemoBlock {
            input: input.into(),
            output: output.into(),
        }
    }

    #[test]
    fn goal_prompt_without_demos_has_no_example_block() {
        let prompt = render_goal_prompt("put 1 plate in dishwasher", &[]);
        assert!(!prompt.contains("Example:"));
        assert!(prompt.contains("Task goal: put 1 plate in dishwasher"));
        assert_eq!(Level::detect(&prompt), Some(Level::Goal));
    }

    #[test]
    fn goal_prompt_with_three_demos_has_three_blocks() {
        let demos = vec![
            demo("put 1 cup in cabinet", "1. put 1 cup in cabinet"),
            demo("put 2 apples in fridge", "1. put 2 apples in fridge"),
            demo("close fridge", "1. close fridge"),
        ];
        let prompt = render_goal_prompt("put 1 plate in dishwasher", &demos);
        assert_eq!(prompt.matches("Example:").count(), 3);
    }

    #[test]
    fn query_extraction_prefers_last_anchor() {
        let demos = vec![demo("put 1 cup in cabinet", "1. put 1 cup in cabinet")];
        let prompt = render_goal_prompt("put 1 plate in dishwasher", &demos);
        assert_eq!(
            extract_query(&prompt, Level::Goal).as_deref(),
            Some("put 1 plate in dishwasher")
        );
    }

    #[test]
    fn level_detection_across_templates() {
        assert_eq!(
            Level::detect(&render_task_prompt("close fridge", "", &[], task_templates())),
            Some(Level::Task)
        );
        assert_eq!(
            Level::detect(&render_action_prompt("close fridge", &[])),
            Some(Level::Action)
        );
        assert_eq!(
            Level::detect(&render_flat_prompt("close fridge", "", &[])),
            Some(Level::Flat)
        );
        assert_eq!(
            Level::detect(&render_react_prompt("close fridge", "", &[])),
            Some(Level::React)
        );
        assert_eq!(Level::detect("no marker"), None);
    }

    #[test]
    fn parses_numbered_subgoals() {
        let out = "1. put 1 plate in dishwasher\n2. put 2 apples in fridge";
        let subgoals = parse_subgoals(out).unwrap();
        assert_eq!(subgoals.len(), 2);
        assert_eq!(subgoals[0].text, "put 1 plate in dishwasher");
        assert_eq!(subgoals[1].spec.predicates.len(), 1);
    }

    #[test]
    fn subgoal_chatter_is_ignored() {
        let out = "1. put 1 plate in dishwasher\n\nSure! Those are the subgoals.";
        assert_eq!(parse_subgoals(out).unwrap().len(), 1);
        assert_eq!(parse_subgoals("no list here"), Err(ParseEmpty));
    }

    #[test]
    fn parses_interleaved_subtasks() {
        let out = "Think: the plate should go to the dishwasher.\n\
                   Subtask 1: put 1 plate in dishwasher\n\
                   Think: done after that.\n\
                   Subtask 2: close dishwasher";
        let subtasks = parse_subtasks(out).unwrap();
        assert_eq!(subtasks.len(), 2);
        assert_eq!(subtasks[1].text, "close dishwasher");
        assert_eq!(parse_subtasks("Think: nothing but thoughts"), Err(ParseEmpty));
    }

    #[test]
    fn parses_action_phrases_and_counts_unknown() {
        let out = "walk to kitchentable\ngrab plate\nfly to the moon\nput plate in dishwasher";
        let parsed = parse_actions(out).unwrap();
        assert_eq!(parsed.actions.len(), 3);
        assert_eq!(parsed.skipped, 1);
        assert_eq!(parsed.actions[2], Action::with_two(Verb::PutIn, "plate", "dishwasher"));
        assert_eq!(parse_actions(""), Err(ParseEmpty));
    }

    #[test]
    fn action_parse_accepts_canonical_and_numbered_lines() {
        let out = "1. walk kitchentable\n2) putin plate dishwasher\n3. switch on faucet";
        let parsed = parse_actions(out).unwrap();
        assert_eq!(parsed.actions.len(), 3);
        assert_eq!(parsed.skipped, 0);
        assert_eq!(parsed.actions[2], Action::new(Verb::SwitchOn, "faucet"));
    }

    #[test]
    fn format_parse_round_trips() {
        let subgoals = vec![
            "put 1 plate in dishwasher".to_string(),
            "put 2 apples in fridge".to_string(),
        ];
        let parsed = parse_subgoals(&format_subgoals(&subgoals)).unwrap();
        assert_eq!(parsed.iter().map(|s| s.text.clone()).collect::<Vec<_>>(), subgoals);

        let subtasks = vec!["put 1 apple_2 in fridge".to_string(), "close fridge".to_string()];
        let parsed = parse_subtasks(&format_subtasks(&subtasks)).unwrap();
        assert_eq!(parsed.iter().map(|s| s.text.clone()).collect::<Vec<_>>(), subtasks);

        let actions = vec![
            Action::new(Verb::Walk, "kitchentable"),
            Action::new(Verb::Grab, "plate"),
            Action::with_two(Verb::PutOn, "plate", "kitchentable"),
            Action::new(Verb::SwitchOff, "tv_1"),
        ];
        let parsed = parse_actions(&format_actions(&actions)).unwrap();
        assert_eq!(parsed.actions, actions);
        assert_eq!(parsed.skipped, 0);

        let parsed = parse_actions(&format_react(&actions)).unwrap();
        assert_eq!(parsed.actions, actions);
    }

    #[test]
    fn parsers_tolerate_garbage() {
        for garbage in ["", "\u{0}\u{1}\u{2}", "1.", "Subtask :", "put in on", "walk"] {
            let _ = parse_subgoals(garbage);
            let _ = parse_subtasks(garbage);
            let _ = parse_actions(garbage);
        }
    }
}
