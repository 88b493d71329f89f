//! Small hand-built environments shared by tests and examples.

use super::{
    Action, Category, EnvironmentGraph, ObjectNode, ObjectProperty, ObjectState, Plan, Relation,
    StepOrigin, Verb,
};

fn node(
    id: &str,
    class: &str,
    category: Category,
    states: &[ObjectState],
    properties: &[ObjectProperty],
) -> ObjectNode {
    ObjectNode {
        id: id.to_string(),
        class_name: class.to_string(),
        category,
        states: states.iter().copied().collect(),
        properties: properties.iter().copied().collect(),
    }
}

/// Kitchen with a plate on the table and a closed dishwasher; the agent
/// starts in the living room, away from everything.
pub fn fig1_env() -> EnvironmentGraph {
    let mut env = EnvironmentGraph::new("livingroom".to_string());
    env.add_node(node("kitchen", "kitchen", Category::Room, &[], &[]));
    env.add_node(node("livingroom", "livingroom", Category::Room, &[], &[]));
    env.add_node(node(
        "kitchentable",
        "kitchentable",
        Category::Surface,
        &[],
        &[ObjectProperty::Support],
    ));
    env.add_node(node(
        "dishwasher",
        "dishwasher",
        Category::Container,
        &[ObjectState::Closed],
        &[ObjectProperty::Openable, ObjectProperty::Containment],
    ));
    env.add_node(node(
        "plate",
        "plate",
        Category::Grabable,
        &[],
        &[ObjectProperty::Grabable],
    ));
    env.add_edge("kitchentable", Relation::Inside, "kitchen");
    env.add_edge("dishwasher", Relation::Inside, "kitchen");
    env.add_edge("plate", Relation::On, "kitchentable");
    env.validate().expect("fixture is valid");
    env
}

/// The six-step plan that moves the plate into the dishwasher.
pub fn fig1_plan() -> Plan {
    Plan::from_actions(
        vec![
            Action::new(Verb::Walk, "kitchentable"),
            Action::new(Verb::Grab, "plate"),
            Action::new(Verb::Walk, "dishwasher"),
            Action::new(Verb::Open, "dishwasher"),
            Action::with_two(Verb::PutIn, "plate", "dishwasher"),
            Action::new(Verb::Close, "dishwasher"),
        ],
        StepOrigin::Oracle,
    )
}

/// Adds a closed fridge to the kitchen with one apple inside.
pub fn add_closed_fridge_with_apple(env: &mut EnvironmentGraph) {
    env.add_node(node(
        "fridge",
        "fridge",
        Category::Container,
        &[ObjectState::Closed],
        &[ObjectProperty::Openable, ObjectProperty::Containment],
    ));
    env.add_node(node(
        "apple",
        "apple",
        Category::Grabable,
        &[],
        &[ObjectProperty::Grabable],
    ));
    env.add_edge("fridge", Relation::Inside, "kitchen");
    env.add_edge("apple", Relation::Inside, "fridge");
    env.validate().expect("fixture is valid");
}

/// Adds one grabable instance placed in/on `parent`.
pub fn add_grabable(env: &mut EnvironmentGraph, class: &str, id: &str, parent: &str, rel: Relation) {
    env.add_node(node(
        id,
        class,
        Category::Grabable,
        &[],
        &[ObjectProperty::Grabable],
    ));
    env.add_edge(id, rel, parent);
    env.validate().expect("fixture is valid");
}

/// Adds a switched-off appliance inside `room`.
pub fn add_switchable(env: &mut EnvironmentGraph, class: &str, id: &str, room: &str) {
    env.add_node(node(
        id,
        class,
        Category::Appliance,
        &[ObjectState::Off],
        &[ObjectProperty::Switchable],
    ));
    env.add_edge(id, Relation::Inside, room);
    env.validate().expect("fixture is valid");
}
