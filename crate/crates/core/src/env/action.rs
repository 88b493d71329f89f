//! Typed actions and plans, plus the line-oriented plan text format
//! (`verb arg1[ arg2]`, lowercase, one action per line).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Walk,
    Grab,
    Open,
    Close,
    PutIn,
    PutOn,
    SwitchOn,
    SwitchOff,
}

impl Verb {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verb::Walk => "walk",
            Verb::Grab => "grab",
            Verb::Open => "open",
            Verb::Close => "close",
            Verb::PutIn => "putin",
            Verb::PutOn => "puton",
            Verb::SwitchOn => "switchon",
            Verb::SwitchOff => "switchoff",
        }
    }

    pub fn from_token(token: &str) -> Option<Verb> {
        match token {
            "walk" => Some(Verb::Walk),
            "grab" => Some(Verb::Grab),
            "open" => Some(Verb::Open),
            "close" => Some(Verb::Close),
            "putin" => Some(Verb::PutIn),
            "puton" => Some(Verb::PutOn),
            "switchon" => Some(Verb::SwitchOn),
            "switchoff" => Some(Verb::SwitchOff),
            _ => None,
        }
    }

    /// `putin`/`puton` take two arguments, everything else one.
    pub fn takes_two_args(&self) -> bool {
        matches!(self, Verb::PutIn | Verb::PutOn)
    }

    pub const ALL: [Verb; 8] = [
        Verb::Walk,
        Verb::Grab,
        Verb::Open,
        Verb::Close,
        Verb::PutIn,
        Verb::PutOn,
        Verb::SwitchOn,
        Verb::SwitchOff,
    ];
}

/// One agent action. Arguments are node ids or class tokens; class tokens
/// are resolved against the environment at execution time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub verb: Verb,
    pub arg1: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg2: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ActionSyntaxError {
    #[error("line {line}: unknown verb {token:?}")]
    UnknownVerb { line: usize, token: String },
    #[error("line {line}: verb {verb} expects {expected} argument(s), got {got}")]
    Arity {
        line: usize,
        verb: &'static str,
        expected: usize,
        got: usize,
    },
}

impl Action {
    pub fn new(verb: Verb, arg1: impl Into<String>) -> Self {
        Action {
            verb,
            arg1: arg1.into(),
            arg2: None,
        }
    }

    pub fn with_two(verb: Verb, arg1: impl Into<String>, arg2: impl Into<String>) -> Self {
        Action {
            verb,
            arg1: arg1.into(),
            arg2: Some(arg2.into()),
        }
    }

    /// Parses one `verb arg1[ arg2]` line.
    pub fn parse_line(text: &str, line: usize) -> Result<Action, ActionSyntaxError> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let verb_token = tokens.first().copied().unwrap_or("");
        let verb = Verb::from_token(verb_token).ok_or_else(|| ActionSyntaxError::UnknownVerb {
            line,
            token: verb_token.to_string(),
        })?;
        let expected = if verb.takes_two_args() { 2 } else { 1 };
        let got = tokens.len().saturating_sub(1);
        if got != expected {
            return Err(ActionSyntaxError::Arity {
                line,
                verb: verb.as_str(),
                expected,
                got,
            });
        }
        Ok(Action {
            verb,
            arg1: tokens[1].to_string(),
            arg2: tokens.get(2).map(|s| s.to_string()),
        })
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.arg2 {
            Some(arg2) => write!(f, "{} {} {}", self.verb.as_str(), self.arg1, arg2),
            None => write!(f, "{} {}", self.verb.as_str(), self.arg1),
        }
    }
}

/// Where a plan step came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepOrigin {
    /// Produced by the symbolic planner.
    Oracle,
    /// Parsed from a model output; `stage` indexes the producing stage
    /// invocation within the decomposition trace.
    Model { stage: usize },
    /// Inserted or rewritten by a plan correction rule.
    Correction { rule: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub action: Action,
    pub origin: StepOrigin,
}

/// Ordered action sequence with per-step provenance.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn from_actions(actions: Vec<Action>, origin: StepOrigin) -> Self {
        Plan {
            steps: actions
                .into_iter()
                .map(|action| PlanStep {
                    action,
                    origin: origin.clone(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().map(|s| &s.action)
    }

    /// Canonical plan text: one `verb arg1[ arg2]` line per step.
    pub fn to_text(&self) -> String {
        self.steps
            .iter()
            .map(|s| s.action.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Parses canonical plan text. Empty and whitespace-only input is the
/// empty plan.
pub fn parse_plan_text(text: &str) -> Result<Plan, ActionSyntaxError> {
    let mut actions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        actions.push(Action::parse_line(line, i + 1)?);
    }
    Ok(Plan::from_actions(actions, StepOrigin::Oracle))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        let text = "walk kitchentable\ngrab plate\nputin plate dishwasher";
        let plan = parse_plan_text(text).unwrap();
        assert_eq!(plan.len(), 3);
        assert_eq!(plan.to_text(), text);
    }

    #[test]
    fn arity_errors() {
        assert!(matches!(
            Action::parse_line("putin plate", 1),
            Err(ActionSyntaxError::Arity { expected: 2, got: 1, .. })
        ));
        assert!(matches!(
            Action::parse_line("walk a b", 1),
            Err(ActionSyntaxError::Arity { expected: 1, got: 2, .. })
        ));
        assert!(matches!(
            Action::parse_line("fly moon", 3),
            Err(ActionSyntaxError::UnknownVerb { line: 3, .. })
        ));
    }

    #[test]
    fn empty_text_is_empty_plan() {
        assert!(parse_plan_text("").unwrap().is_empty());
        assert!(parse_plan_text("  \n\n").unwrap().is_empty());
    }
}
