//! Symbolic household environment: object graph, agent state, action
//! semantics, and textual observations.
//!
//! The environment is a value type. Executing an action produces a new
//! state (or mutates an owned copy); nothing here holds shared mutable
//! state, so environments can be cloned and sent across worker threads
//! freely.

mod action;
mod exec;
pub mod fixtures;
pub mod generator;

pub use action::{parse_plan_text, Action, Plan, PlanStep, StepOrigin, Verb};
pub use exec::{
    apply_action, check_action, execute_plan, execute_plan_with_goal, goal_satisfied,
    goal_target_ids, is_executable, placement_count, ActionFailure, ExecutionResult,
    ResolvedAction, StepFailure,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Node identifier. Unique within one environment; generated environments
/// use `<class>_<n>`, hand-written fixtures may use bare class names.
pub type NodeId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Room,
    Grabable,
    Container,
    Surface,
    Appliance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ObjectState {
    Open,
    Closed,
    On,
    Off,
}

impl fmt::Display for ObjectState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ObjectState::Open => "OPEN",
            ObjectState::Closed => "CLOSED",
            ObjectState::On => "ON",
            ObjectState::Off => "OFF",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectProperty {
    Openable,
    Switchable,
    Grabable,
    Containment,
    Support,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: NodeId,
    #[serde(rename = "class")]
    pub class_name: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub states: BTreeSet<ObjectState>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub properties: BTreeSet<ObjectProperty>,
}

impl ObjectNode {
    pub fn has_property(&self, p: ObjectProperty) -> bool {
        self.properties.contains(&p)
    }

    pub fn has_state(&self, s: ObjectState) -> bool {
        self.states.contains(&s)
    }

    pub fn is_room(&self) -> bool {
        self.category == Category::Room
    }
}

/// Spatial relation between two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Relation {
    Inside,
    On,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Inside => f.write_str("INSIDE"),
            Relation::On => f.write_str("ON"),
        }
    }
}

/// `subject` is INSIDE/ON `object`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    #[serde(rename = "s")]
    pub subject: NodeId,
    #[serde(rename = "r")]
    pub relation: Relation,
    #[serde(rename = "o")]
    pub object: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    /// Room the agent is in.
    pub location: NodeId,
    /// Objects currently held, in grab order.
    #[serde(default)]
    pub held: Vec<NodeId>,
    /// Node the agent last walked to. Co-location is judged against this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<NodeId>,
}

fn default_hand_capacity() -> usize {
    1
}

fn is_default_hand_capacity(c: &usize) -> bool {
    *c == 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentGraph {
    /// Keyed by node id; BTreeMap keeps serialization and iteration stable.
    #[serde(
        serialize_with = "ser_nodes",
        deserialize_with = "de_nodes",
        rename = "nodes"
    )]
    pub nodes: BTreeMap<NodeId, ObjectNode>,
    pub edges: BTreeSet<Edge>,
    pub agent: AgentState,
    /// Max objects the agent can hold at once.
    #[serde(
        default = "default_hand_capacity",
        skip_serializing_if = "is_default_hand_capacity"
    )]
    pub hand_capacity: usize,
}

fn ser_nodes<S: serde::Serializer>(
    nodes: &BTreeMap<NodeId, ObjectNode>,
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_seq(nodes.values())
}

fn de_nodes<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> Result<BTreeMap<NodeId, ObjectNode>, D::Error> {
    let list = Vec::<ObjectNode>::deserialize(d)?;
    let mut map = BTreeMap::new();
    for node in list {
        if map.insert(node.id.clone(), node).is_some() {
            return Err(serde::de::Error::custom("duplicate node id"));
        }
    }
    Ok(map)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("unknown object: {0}")]
    UnknownObject(String),
    #[error("edge references missing node: {0}")]
    DanglingEdge(NodeId),
    #[error("node {0} has {1} spatial parents, expected exactly one")]
    ParentCount(NodeId, usize),
    #[error("room {0} must not have a spatial parent")]
    RoomWithParent(NodeId),
    #[error("node {0} is not connected to a room")]
    NoRoomAncestor(NodeId),
    #[error("node {0} has inconsistent states: {1}")]
    BadStates(NodeId, String),
    #[error("node {0} has property grabable but category {1:?}")]
    GrabableCategory(NodeId, Category),
    #[error("agent location {0} is not a room")]
    AgentLocation(NodeId),
    #[error("agent holds {0} objects, capacity is {1}")]
    HandCapacity(usize, usize),
    #[error("held object {0} still has a spatial parent")]
    HeldWithParent(NodeId),
    #[error("goal references class absent from environment: {0}")]
    UnsatisfiableGoal(String),
}

impl EnvironmentGraph {
    pub fn new(agent_location: NodeId) -> Self {
        EnvironmentGraph {
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
            agent: AgentState {
                location: agent_location,
                held: Vec::new(),
                at: None,
            },
            hand_capacity: 1,
        }
    }

    pub fn node(&self, id: &str) -> Option<&ObjectNode> {
        self.nodes.get(id)
    }

    /// Spatial parent of a node, if any. Held objects have no parent edge.
    pub fn parent_of(&self, id: &str) -> Option<(&NodeId, Relation)> {
        self.edges
            .iter()
            .find(|e| e.subject == id)
            .map(|e| (&e.object, e.relation))
    }

    pub fn is_held(&self, id: &str) -> bool {
        self.agent.held.iter().any(|h| h == id)
    }

    /// Walks the parent chain up to the enclosing room.
    pub fn room_of(&self, id: &str) -> Option<&NodeId> {
        let mut current = id;
        for _ in 0..self.nodes.len() + 1 {
            let node = self.nodes.get(current)?;
            if node.is_room() {
                return self.nodes.get_key_value(current).map(|(k, _)| k);
            }
            match self.parent_of(current) {
                Some((p, _)) => current = p,
                None => return None,
            }
        }
        None
    }

    /// Innermost openable container enclosing `id`, if any.
    pub fn enclosing_container(&self, id: &str) -> Option<&ObjectNode> {
        let (parent, rel) = self.parent_of(id)?;
        if rel == Relation::Inside {
            let node = self.nodes.get(parent)?;
            if !node.is_room() {
                return Some(node);
            }
        }
        None
    }

    /// All node ids of a class, sorted by id.
    pub fn instances_of_class(&self, class: &str) -> Vec<&NodeId> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.class_name == class)
            .map(|(id, _)| id)
            .collect()
    }

    /// The agent is co-located with its walk target and with anything
    /// directly in or on that target.
    pub fn co_located(&self, id: &str) -> bool {
        let Some(at) = self.agent.at.as_deref() else {
            return false;
        };
        if at == id {
            return true;
        }
        matches!(self.parent_of(id), Some((p, _)) if p == at)
    }

    pub fn add_node(&mut self, node: ObjectNode) {
        self.nodes.insert(node.id.clone(), node);
    }

    pub fn add_edge(&mut self, subject: &str, relation: Relation, object: &str) {
        self.edges.insert(Edge {
            subject: subject.to_string(),
            relation,
            object: object.to_string(),
        });
    }

    pub fn remove_parent_edge(&mut self, subject: &str) {
        self.edges.retain(|e| e.subject != subject);
    }

    /// Structural validation: every invariant the graph must uphold.
    pub fn validate(&self) -> Result<(), EnvError> {
        for edge in &self.edges {
            if !self.nodes.contains_key(&edge.subject) {
                return Err(EnvError::DanglingEdge(edge.subject.clone()));
            }
            if !self.nodes.contains_key(&edge.object) {
                return Err(EnvError::DanglingEdge(edge.object.clone()));
            }
        }
        for (id, node) in &self.nodes {
            let parents = self.edges.iter().filter(|e| &e.subject == id).count();
            if node.is_room() {
                if parents != 0 {
                    return Err(EnvError::RoomWithParent(id.clone()));
                }
            } else if self.is_held(id) {
                if parents != 0 {
                    return Err(EnvError::HeldWithParent(id.clone()));
                }
            } else {
                if parents != 1 {
                    return Err(EnvError::ParentCount(id.clone(), parents));
                }
                if self.room_of(id).is_none() {
                    return Err(EnvError::NoRoomAncestor(id.clone()));
                }
            }
            self.validate_states(node)?;
            if node.has_property(ObjectProperty::Grabable) && node.category != Category::Grabable {
                return Err(EnvError::GrabableCategory(id.clone(), node.category));
            }
        }
        match self.nodes.get(&self.agent.location) {
            Some(n) if n.is_room() => {}
            _ => return Err(EnvError::AgentLocation(self.agent.location.clone())),
        }
        if let Some(at) = &self.agent.at {
            if !self.nodes.contains_key(at) {
                return Err(EnvError::UnknownObject(at.clone()));
            }
        }
        if self.agent.held.len() > self.hand_capacity {
            return Err(EnvError::HandCapacity(
                self.agent.held.len(),
                self.hand_capacity,
            ));
        }
        for held in &self.agent.held {
            if !self.nodes.contains_key(held) {
                return Err(EnvError::UnknownObject(held.clone()));
            }
        }
        Ok(())
    }

    fn validate_states(&self, node: &ObjectNode) -> Result<(), EnvError> {
        let open = node.has_state(ObjectState::Open) as u8 + node.has_state(ObjectState::Closed) as u8;
        let power = node.has_state(ObjectState::On) as u8 + node.has_state(ObjectState::Off) as u8;
        if node.has_property(ObjectProperty::Openable) {
            if open != 1 {
                return Err(EnvError::BadStates(
                    node.id.clone(),
                    "openable needs exactly one of OPEN/CLOSED".into(),
                ));
            }
        } else if open != 0 {
            return Err(EnvError::BadStates(
                node.id.clone(),
                "OPEN/CLOSED on non-openable".into(),
            ));
        }
        if node.has_property(ObjectProperty::Switchable) {
            if power != 1 {
                return Err(EnvError::BadStates(
                    node.id.clone(),
                    "switchable needs exactly one of ON/OFF".into(),
                ));
            }
        } else if power != 0 {
            return Err(EnvError::BadStates(
                node.id.clone(),
                "ON/OFF on non-switchable".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// One line per (grabable class, parent) group:
    /// `<count> <class> is/are <in|on> <parent>`, sorted by class then parent.
    pub fn render_observation(&self) -> String {
        let mut groups: BTreeMap<(String, NodeId, Relation), usize> = BTreeMap::new();
        for (id, node) in &self.nodes {
            if node.category != Category::Grabable || self.is_held(id) {
                continue;
            }
            if let Some((parent, rel)) = self.parent_of(id) {
                *groups
                    .entry((node.class_name.clone(), parent.clone(), rel))
                    .or_insert(0) += 1;
            }
        }
        let mut lines = Vec::with_capacity(groups.len());
        for ((class, parent, rel), count) in groups {
            let be = if count == 1 { "is" } else { "are" };
            let prep = match rel {
                Relation::Inside => "in",
                Relation::On => "on",
            };
            lines.push(format!("{count} {class} {be} {prep} {parent}"));
        }
        lines.join("\n")
    }

    /// Total object count; conserved by every action.
    pub fn object_count(&self) -> usize {
        self.nodes.len()
    }
}
