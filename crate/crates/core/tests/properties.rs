mod common;

use mugsim::agents::{MugEvent, MugMode, UavAgent, UavConfig, UsvAgent, UsvConfig, MUG_EDGES};
use mugsim::comms::{CommEvent, DropoutLink, HorizonLink, LinkTable, Payload};
use mugsim::coordinator::{
    forecast_energy, CoordinatorConfig, Decision, EnergyForecast, ForecastInput, KnownMug, LazyForecast,
    PlanOutcome, PlannerView, UavForecastState,
};
use mugsim::physics::Environment;
use mugsim::registry::planners;
use mugsim::VehicleId;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn glider_modes_follow_declared_edges(events in prop::collection::vec(0..MugEvent::ALL.len(), 0..200)) {
        let mut mode = MugMode::PreDeploy;
        for i in events {
            let e = MugEvent::ALL[i];
            let next = mode.on(e);
            prop_assert!(next == mode || MUG_EDGES.contains(&(mode, next)), "{:?} --{:?}--> {:?}", mode, e, next);
            if mode == MugMode::FaultLowBattery && next != mode {
                prop_assert_eq!(e, MugEvent::PickedUp);
            }
            mode = next;
        }
    }
}

fn payload(i: u32) -> Payload {
    Payload::CtdBatch { samples: 1 + i % 40, first: i as f64, last: i as f64 + 1.0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn messages_are_conserved_every_tick(seed in any::<u64>(), dropout in 0.0..0.9f64, ticks in 1usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = common::random_nodes(&mut rng);
        let ids: Vec<VehicleId> = nodes.keys().cloned().collect();
        let mut net = common::network_of(&nodes);
        let model = DropoutLink { probability: dropout };
        let mut n = 0u32;
        for t in 0..ticks {
            let now = t as f64;
            for _ in 0..rand::Rng::random_range(&mut rng, 0..3) {
                let a = rand::Rng::random_range(&mut rng, 0..ids.len());
                let b = (a + rand::Rng::random_range(&mut rng, 1..ids.len())) % ids.len();
                net.originate(&ids[a], &ids[b], payload(n), now).unwrap();
                n += 1;
            }
            let links = LinkTable::evaluate(&nodes, &model, &mut rng);
            net.step(&links, now);
            net.check_conservation().map_err(|e| TestCaseError::fail(e.to_string()))?;
        }
        // telemetry arrivals add acks on top of what we sent
        prop_assert!(net.ledger.created >= n as u64);
    }

    #[test]
    fn reachable_pairs_deliver_on_steady_links(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = common::random_nodes(&mut rng);
        for n in nodes.values_mut() {
            n.powered = true;
        }
        let reachable = mugsim::comms::connectivity_oracle(&nodes);
        let mut net = common::network_of(&nodes);
        let links = LinkTable::evaluate(&nodes, &HorizonLink, &mut rng);
        let mut sent = BTreeMap::new();
        for (i, (a, b)) in reachable.iter().enumerate() {
            let (id, _) = net.originate(a, b, payload(i as u32), 0.0).unwrap();
            sent.insert(id, (a.clone(), b.clone()));
        }
        let mut delivered = BTreeSet::new();
        for t in 0..60 {
            for e in net.step(&links, t as f64) {
                if let CommEvent::Delivered { msg, .. } = e {
                    delivered.insert(msg);
                }
            }
        }
        net.check_conservation().map_err(|e| TestCaseError::fail(e.to_string()))?;
        for (id, pair) in &sent {
            prop_assert!(delivered.contains(id), "{:?} not delivered", pair);
        }
    }
}

fn forecast(env: &Environment, uavs: &[UavAgent]) -> EnergyForecast {
    let states: BTreeMap<_, _> = uavs
        .iter()
        .map(|u| {
            let s = UavForecastState {
                charge: u.battery.charge,
                capacity: u.battery.capacity,
                returns_at: None,
                remaining_draw: 0.0,
            };
            (u.id.clone(), s)
        })
        .collect();
    let input = ForecastInput {
        now: 0.0,
        usv_charge: 800.0,
        usv_capacity: 1000.0,
        usv_hotel: 5.0,
        recharge_power: 60.0,
        uavs: states,
        committed: &[],
        env,
    };
    forecast_energy(&input, 86_400.0, 60.0)
}

fn known_mug() -> impl Strategy<Value = KnownMug> {
    (
        -4000.0..4000.0f64,
        -4000.0..4000.0f64,
        0.0..500.0f64,
        prop::sample::select(vec!["WAIT_RECOVERY", "FAULT_LOW_BATTERY", "DESCEND", "SURFACE_FIX"]),
        any::<bool>(),
        -0.3..0.3f64,
    )
        .prop_map(|(x, y, sigma, mode, requested, drift)| KnownMug {
            id: VehicleId::new("m"),
            position: [x, y],
            sigma,
            mode: mode.into(),
            in_bay: false,
            carried: false,
            recovery_requested: requested,
            drift: [drift, -drift],
            fix_age: sigma,
        })
}

fn decide(planner: &str, mugs: &[KnownMug], charges: &[f64]) -> Vec<PlanOutcome> {
    let env = Environment::default();
    let usv = UsvAgent::new(UsvConfig::default());
    let uavs: Vec<UavAgent> = charges
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let config = UavConfig {
                id: VehicleId::new(format!("uav-{}", i + 1)),
                initial_charge: Some(*c),
                ..UavConfig::default()
            };
            UavAgent::new(config, usv.position)
        })
        .collect();
    let f = LazyForecast::new(|| forecast(&env, &uavs));
    let config = CoordinatorConfig::default();
    let view = PlannerView {
        now: 0.0,
        usv: &usv,
        uavs: &uavs,
        mugs,
        pending_deploys: &[],
        relay: &[],
        busy_mugs: &[],
        relay_active: false,
        bandwidth: 2400.0,
        forecast: &f,
        config: &config,
        next_plan_id: 1,
    };
    planners().build(planner, &config).unwrap().decide(&view)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn greedy_plans_are_repeatable_and_affordable(
        mut mugs in prop::collection::vec(known_mug(), 0..4),
        charges in prop::collection::vec(15.0..100.0f64, 1..3),
    ) {
        for (i, m) in mugs.iter_mut().enumerate() {
            m.id = VehicleId::new(format!("mug-{}", i + 1));
        }
        let a = decide("greedy", &mugs, &charges);
        let b = decide("greedy", &mugs, &charges);
        prop_assert_eq!(&a, &b);
        let plans: Vec<_> = a
            .iter()
            .filter_map(|o| match &o.decision {
                Decision::Plan(p) => Some(p),
                Decision::Deferred { .. } => None,
            })
            .collect();
        prop_assert!(plans.len() <= 1);
        for p in plans {
            let i: usize = p.uav.as_str()["uav-".len()..].parse().unwrap();
            let charge = charges[i - 1];
            prop_assert!(p.launch_charge() <= charge, "{} > {}", p.launch_charge(), charge);
            prop_assert_eq!(&p.legs.first().unwrap()[..2], &[0.0, 0.0][..]);
            prop_assert_eq!(&p.legs.last().unwrap()[..2], &[0.0, 0.0][..]);
        }
        for o in &a {
            if let Decision::Deferred { retry_at, .. } = o.decision {
                prop_assert!(retry_at > 0.0);
            }
        }
    }
}

