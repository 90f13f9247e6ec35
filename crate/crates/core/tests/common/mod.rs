#![allow(dead_code)]

use mugsim::agents::{MugConfig, UavConfig};
use mugsim::comms::{HorizonLink, LinkTable, Network, NodeRole, RadioNode};
use mugsim::scenario::{load_scenario_file, ScenarioConfig};
use mugsim::VehicleId;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn committed(name: &str) -> ScenarioConfig {
    load_scenario_file(&scenarios_dir().join(name))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
        .config
}

/// Randomized mission: 1 to 3 gliders (some starting in the bay), 1 or 2
/// UAVs with random charge, a random vessel track, a random current and a
/// tick of 1, 2 or 5 s.
/// Glider packs start just above their reserve so recoveries come early.
pub fn random_scenario(seed: u64, planner: &str) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = ScenarioConfig::default();
    c.simulation.seed = seed;
    c.simulation.duration = 4.0 * 3600.0;
    c.simulation.telemetry_interval = 60.0;
    c.coordinator.planner = planner.into();
    let speed = rng.random_range(0.0..0.3);
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    c.environment.current.surface = [speed * heading.cos(), speed * heading.sin()];
    let n_uav = rng.random_range(1..=2);
    c.uav = (0..n_uav)
        .map(|i| UavConfig {
            id: VehicleId::new(format!("uav-{}", i + 1)),
            initial_charge: Some(rng.random_range(25.0..=100.0)),
            ..UavConfig::default()
        })
        .collect();
    if rng.random_bool(0.5) {
        let far = [rng.random_range(-4000.0..4000.0), rng.random_range(-4000.0..4000.0)];
        c.usv.track = vec![far, [0.0, 0.0]];
        c.usv.speed = rng.random_range(0.2..1.5);
    }
    let n_mug = rng.random_range(1..=3);
    c.mug = (0..n_mug)
        .map(|i| {
            let r = rng.random_range(300.0..7000.0);
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let p = [r * a.cos(), r * a.sin()];
            let mut m = MugConfig {
                id: VehicleId::new(format!("mug-{}", i + 1)),
                position: p,
                initial_charge: Some(rng.random_range(17.8..22.0)),
                target_depth: rng.random_range(30.0..=200.0),
                ..MugConfig::default()
            };
            if rng.random_bool(0.3) {
                m.drop_point = Some(p);
            }
            m
        })
        .collect();
    c.simulation.dt = *[1.0, 2.0, 5.0].choose(&mut rng).expect("non-empty");
    c
}

/// Random node set for link tests: gliders at the surface or submerged,
/// UAVs between the deck and 150 m, one vessel mast, some radios off.
pub fn random_nodes(rng: &mut ChaCha8Rng) -> BTreeMap<VehicleId, RadioNode> {
    let n = rng.random_range(2..=6);
    let mut out = BTreeMap::new();
    for i in 0..n {
        let role = match rng.random_range(0..3) {
            0 => NodeRole::Glider,
            1 => NodeRole::Aerial,
            _ => NodeRole::Surface,
        };
        let z = match role {
            NodeRole::Glider => {
                if rng.random_bool(0.7) {
                    0.1
                } else {
                    -rng.random_range(0.5..200.0)
                }
            }
            NodeRole::Aerial => rng.random_range(0.0..150.0),
            NodeRole::Surface => 2.0,
        };
        let mut node = RadioNode::new(VehicleId::new(format!("n{i}")), role);
        node.position = [rng.random_range(0.0..40_000.0), rng.random_range(0.0..10_000.0), z];
        node.powered = rng.random_bool(0.9);
        out.insert(node.id.clone(), node);
    }
    out
}

pub fn network_of(nodes: &BTreeMap<VehicleId, RadioNode>) -> Network {
    let mut net = Network::new(Default::default(), 1.0);
    for n in nodes.values() {
        net.add_node(n.clone()).unwrap();
    }
    net
}

pub fn horizon_links(nodes: &BTreeMap<VehicleId, RadioNode>) -> LinkTable {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    LinkTable::evaluate(nodes, &HorizonLink, &mut rng)
}
