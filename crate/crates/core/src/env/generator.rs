//! Procedural household environments, used for dataset construction and
//! randomized tests. Everything is driven by a single seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Category, EnvironmentGraph, ObjectNode, ObjectProperty, ObjectState, Relation,
};

pub const ROOM_POOL: &[&str] = &["kitchen", "livingroom", "bedroom", "bathroom"];

pub const CONTAINER_POOL: &[&str] = &[
    "fridge",
    "dishwasher",
    "cabinet",
    "microwave",
    "oven",
    "drawer",
    "toybox",
];

pub const SURFACE_POOL: &[&str] = &[
    "kitchentable",
    "coffeetable",
    "desk",
    "counter",
    "shelf",
    "nightstand",
];

pub const APPLIANCE_POOL: &[&str] = &["tv", "lamp", "computer", "faucet", "radio"];

pub const GRABABLE_POOL: &[&str] = &[
    "plate", "apple", "cup", "book", "fork", "knife", "towel", "pillow", "remote", "bottle",
    "bread", "mug", "spoon", "banana", "toy", "folder",
];

/// Knobs for environment size. The defaults produce regular-scale homes;
/// [`GeneratorConfig::long_horizon`] produces the larger ones needed for
/// long-task construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub rooms: usize,
    pub grabable_classes: usize,
    pub max_instances_per_class: usize,
    pub containers_per_room: usize,
    pub surfaces_per_room: usize,
    pub appliances_per_room: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            rooms: 2,
            grabable_classes: 3,
            max_instances_per_class: 1,
            containers_per_room: 2,
            surfaces_per_room: 1,
            appliances_per_room: 1,
        }
    }
}

impl GeneratorConfig {
    /// Sized so that one goal predicate per grabable class pushes minimum
    /// plans well past sixty steps.
    pub fn long_horizon() -> Self {
        GeneratorConfig {
            rooms: 3,
            grabable_classes: 12,
            max_instances_per_class: 3,
            containers_per_room: 2,
            surfaces_per_room: 2,
            appliances_per_room: 1,
        }
    }
}

fn make_node(
    id: String,
    class: &str,
    category: Category,
    states: Vec<ObjectState>,
    properties: Vec<ObjectProperty>,
) -> ObjectNode {
    ObjectNode {
        id,
        class_name: class.to_string(),
        category,
        states: states.into_iter().collect(),
        properties: properties.into_iter().collect(),
    }
}

/// Deterministically generates one environment from a seed.
pub fn generate_env(cfg: &GeneratorConfig, seed: u64) -> EnvironmentGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut rooms: Vec<&str> = ROOM_POOL.to_vec();
    rooms.shuffle(&mut rng);
    rooms.truncate(cfg.rooms.clamp(1, ROOM_POOL.len()));

    let mut env = EnvironmentGraph::new(rooms[0].to_string());
    for room in &rooms {
        env.add_node(make_node(
            room.to_string(),
            room,
            Category::Room,
            vec![],
            vec![],
        ));
    }

    let mut class_counters: std::collections::BTreeMap<&str, usize> = Default::default();
    let next_id = |class: &'static str, counters: &mut std::collections::BTreeMap<&str, usize>| {
        let n = counters.entry(class).or_insert(0);
        *n += 1;
        format!("{class}_{n}")
    };

    let mut containers: Vec<String> = Vec::new();
    let mut surfaces: Vec<String> = Vec::new();

    for room in &rooms {
        let mut pool: Vec<&'static str> = CONTAINER_POOL.to_vec();
        pool.shuffle(&mut rng);
        for class in pool.into_iter().take(cfg.containers_per_room) {
            let id = next_id(class, &mut class_counters);
            let state = if rng.gen_bool(0.5) {
                ObjectState::Closed
            } else {
                ObjectState::Open
            };
            env.add_node(make_node(
                id.clone(),
                class,
                Category::Container,
                vec![state],
                vec![ObjectProperty::Openable, ObjectProperty::Containment],
            ));
            env.add_edge(&id, Relation::Inside, room);
            containers.push(id);
        }

        let mut pool: Vec<&'static str> = SURFACE_POOL.to_vec();
        pool.shuffle(&mut rng);
        for class in pool.into_iter().take(cfg.surfaces_per_room) {
            let id = next_id(class, &mut class_counters);
            env.add_node(make_node(
                id.clone(),
                class,
                Category::Surface,
                vec![],
                vec![ObjectProperty::Support],
            ));
            env.add_edge(&id, Relation::Inside, room);
            surfaces.push(id);
        }

        let mut pool: Vec<&'static str> = APPLIANCE_POOL.to_vec();
        pool.shuffle(&mut rng);
        for class in pool.into_iter().take(cfg.appliances_per_room) {
            let id = next_id(class, &mut class_counters);
            let state = if rng.gen_bool(0.5) {
                ObjectState::On
            } else {
                ObjectState::Off
            };
            env.add_node(make_node(
                id.clone(),
                class,
                Category::Appliance,
                vec![state],
                vec![ObjectProperty::Switchable],
            ));
            env.add_edge(&id, Relation::Inside, room);
        }
    }

    // Placement targets always exist: force one of each when a config
    // zeroes them out.
    if containers.is_empty() {
        let id = next_id("fridge", &mut class_counters);
        env.add_node(make_node(
            id.clone(),
            "fridge",
            Category::Container,
            vec![ObjectState::Closed],
            vec![ObjectProperty::Openable, ObjectProperty::Containment],
        ));
        env.add_edge(&id, Relation::Inside, rooms[0]);
        containers.push(id);
    }
    if surfaces.is_empty() {
        let id = next_id("kitchentable", &mut class_counters);
        env.add_node(make_node(
            id.clone(),
            "kitchentable",
            Category::Surface,
            vec![],
            vec![ObjectProperty::Support],
        ));
        env.add_edge(&id, Relation::Inside, rooms[0]);
        surfaces.push(id);
    }

    let mut grab_pool: Vec<&'static str> = GRABABLE_POOL.to_vec();
    grab_pool.shuffle(&mut rng);
    grab_pool.truncate(cfg.grabable_classes.clamp(1, GRABABLE_POOL.len()));
    for class in grab_pool {
        let instances = rng.gen_range(1..=cfg.max_instances_per_class.max(1));
        for _ in 0..instances {
            let id = next_id(class, &mut class_counters);
            env.add_node(make_node(
                id.clone(),
                class,
                Category::Grabable,
                vec![],
                vec![ObjectProperty::Grabable],
            ));
            // Mostly on surfaces, sometimes inside containers.
            if rng.gen_bool(0.3) {
                let parent = containers[rng.gen_range(0..containers.len())].clone();
                env.add_edge(&id, Relation::Inside, &parent);
            } else {
                let parent = surfaces[rng.gen_range(0..surfaces.len())].clone();
                env.add_edge(&id, Relation::On, &parent);
            }
        }
    }

    env.agent.location = rooms[rng.gen_range(0..rooms.len())].to_string();
    env.validate().expect("generated environment is valid");
    env
}
