mod common;

use mugsim::agents::MugMode;
use mugsim::comms::{CommEvent, MessageKind};
use mugsim::engine::{Event, EventRecord, World};
use mugsim::sa::{parse_command, AckStatus, OperatorCommand, Verb};
use mugsim::VehicleId;

fn world() -> World {
    World::new(common::committed("default.toml")).unwrap()
}

fn mug() -> VehicleId {
    VehicleId::new("mug-1")
}

fn cmd(id: &str, target: Option<&str>, verb: Verb) -> OperatorCommand {
    OperatorCommand {
        command_id: id.into(),
        target: target.map(VehicleId::new),
        verb,
        issued_at: None,
    }
}

/// Step until `pred` holds, keeping every event. Panics after `limit` s.
fn run_until(w: &mut World, log: &mut Vec<EventRecord>, limit: f64, mut pred: impl FnMut(&World) -> bool) {
    let end = w.time + limit;
    while !pred(w) {
        assert!(w.time < end, "condition not reached by t={}", w.time);
        w.step();
        log.extend(w.drain_events());
    }
}

fn applied_at(log: &[EventRecord], id: &str) -> Option<(f64, String)> {
    log.iter().find_map(|e| match &e.event {
        Event::CommandApplied { command_id, via, .. } if command_id == id => Some((e.t, via.clone())),
        _ => None,
    })
}

fn descending(w: &World) -> bool {
    let m = &w.mugs[&mug()];
    m.mode == MugMode::Descend && m.kin.depth > 30.0
}

/// From mid-descent to the next surface fix; returns the apex depth.
fn deepest_of_yo(w: &mut World, log: &mut Vec<EventRecord>) -> f64 {
    let mut deepest: f64 = 0.0;
    run_until(w, log, 3600.0, |w| {
        deepest = deepest.max(w.mugs[&mug()].kin.depth);
        w.mugs[&mug()].mode == MugMode::SurfaceFix
    });
    deepest
}

#[test]
fn target_depth_waits_for_the_surface_then_takes_effect() {
    let mut w = world();
    let mut log = Vec::new();
    run_until(&mut w, &mut log, 3600.0, descending);
    let first = deepest_of_yo(&mut w, &mut log);
    assert!(first > 190.0, "{first}");

    run_until(&mut w, &mut log, 3600.0, descending);
    let submitted = w.time;
    let ack = w.submit_command(cmd("d150", Some("mug-1"), Verb::SetTargetDepth { depth: 150.0 }));
    assert_eq!(ack.status, AckStatus::QueuedForUplink, "{ack:?}");
    assert_eq!(w.mugs[&mug()].target_depth, 200.0);

    run_until(&mut w, &mut log, 4.0 * 3600.0, |w| w.mugs[&mug()].target_depth == 150.0);
    let (t, _) = applied_at(&log, "d150").expect("applied event");
    assert!(t > submitted);
    // applied on the surface, never mid-dive
    assert_eq!(w.mugs[&mug()].mode, MugMode::SurfaceFix);
    let fix_entered = log
        .iter()
        .rev()
        .find(|e| matches!(&e.event, Event::Mode { vehicle, to, .. } if *vehicle == mug() && to == "SURFACE_FIX"))
        .map(|e| e.t)
        .unwrap();
    assert!(fix_entered <= t);

    // the next two yos turn at 150 m
    for _ in 0..2 {
        run_until(&mut w, &mut log, 3600.0, descending);
        let deepest = deepest_of_yo(&mut w, &mut log);
        assert!((145.0..=155.0).contains(&deepest), "{deepest}");
    }
}

#[test]
fn recovery_request_mid_dive_leads_to_a_sortie() {
    let mut w = world();
    let mut log = Vec::new();
    run_until(&mut w, &mut log, 3600.0, descending);
    let ack = w.submit_command(cmd("rec", Some("mug-1"), Verb::RequestRecovery));
    assert_eq!(ack.status, AckStatus::Accepted, "{ack:?}");
    run_until(&mut w, &mut log, 4.0 * 3600.0, |w| w.mugs[&mug()].mode == MugMode::WaitRecovery);
    // no further dive between the request and the wait
    let dives = log
        .iter()
        .filter(|e| matches!(&e.event, Event::Mode { vehicle, to, .. } if *vehicle == mug() && to == "DESCEND"))
        .count();
    assert_eq!(dives, 0);
    run_until(&mut w, &mut log, 3600.0, |w| w.stats.sorties_launched > 0);
    assert!(log.iter().any(|e| matches!(&e.event, Event::Plan { plan } if plan.objective.mug() == Some(&mug()))));
    run_until(&mut w, &mut log, 3600.0, |w| w.usv.mug_bay.contains(&mug()));
    assert_eq!(w.mugs[&mug()].mode, MugMode::Recovered);
}

#[test]
fn resubmitting_a_command_id_is_a_no_op() {
    let mut w = world();
    let mut log = Vec::new();
    run_until(&mut w, &mut log, 3600.0, descending);
    let first = w.submit_command(cmd("same", Some("mug-1"), Verb::SetTargetDepth { depth: 120.0 }));
    let again = w.submit_command(cmd("same", Some("mug-1"), Verb::SetTargetDepth { depth: 80.0 }));
    assert!(!first.duplicate);
    assert!(again.duplicate);
    assert_eq!(again.status, first.status);
    run_until(&mut w, &mut log, 4.0 * 3600.0, |w| w.stats.commands_applied > 0);
    for _ in 0..600 {
        w.step();
        log.extend(w.drain_events());
    }
    assert_eq!(w.stats.commands_applied, 1);
    assert_eq!(w.mugs[&mug()].target_depth, 120.0);
    let applied = log.iter().filter(|e| matches!(e.event, Event::CommandApplied { .. })).count();
    assert_eq!(applied, 1);
}

#[test]
fn invalid_commands_are_rejected() {
    let mut w = world();
    let cases = [
        cmd("deep", Some("mug-1"), Verb::SetTargetDepth { depth: 250.0 }),
        cmd("ghost", Some("mug-9"), Verb::RequestRecovery),
        cmd("wrong-kind", Some("uav-1"), Verb::SetTargetDepth { depth: 100.0 }),
        cmd("no-target", None, Verb::RequestRecovery),
        cmd("idle-uav", Some("uav-1"), Verb::AbortSortie),
        cmd("bad-speed", None, Verb::SetSimSpeed { speed: 0.0 }),
        cmd("shallow-drop", Some("mug-1"), Verb::SetDropPoint { point: [100.0, 0.0] }),
        cmd("", Some("mug-1"), Verb::RequestRecovery),
    ];
    for c in cases {
        let ack = w.submit_command(c.clone());
        assert_eq!(ack.status, AckStatus::Rejected, "{c:?} -> {ack:?}");
        assert!(ack.reason.as_deref().is_some_and(|r| !r.is_empty()));
    }
    assert_eq!(w.network.ledger.created, 0);
    let bad = parse_command(r#"{"command_id":"x","verb":"LAUNCH_MISSILES"}"#).unwrap_err();
    assert_eq!(bad.command_id, "x");
    assert_eq!(bad.status, AckStatus::Rejected);
}

#[test]
fn sim_control_applies_immediately() {
    let mut w = world();
    assert_eq!(w.submit_command(cmd("p", None, Verb::PauseSim)).status, AckStatus::Accepted);
    assert!(w.clock().paused);
    let snap = w.snapshot();
    assert!(snap.clock.paused);
    w.submit_command(cmd("s", None, Verb::SetSimSpeed { speed: 20.0 }));
    w.submit_command(cmd("r", None, Verb::ResumeSim));
    let c = w.clock();
    assert!(!c.paused);
    assert_eq!(c.speed, 20.0);
}

#[test]
fn commands_act_only_after_delivery() {
    let mut c = common::committed("default.toml");
    c.simulation.duration = 12.0 * 3600.0;
    let mut w = World::new(c).unwrap();
    let mut log = Vec::new();
    let mut delivered: Vec<(f64, VehicleId)> = Vec::new();
    let mut submitted = Vec::new();
    let mut n = 0;
    while !w.finished() {
        if w.tick % 1800 == 900 {
            n += 1;
            let id = format!("c{n}");
            let depth = if n % 2 == 0 { 180.0 } else { 160.0 };
            let ack = w.submit_command(cmd(&id, Some("mug-1"), Verb::SetTargetDepth { depth }));
            if ack.status != AckStatus::Rejected {
                submitted.push((id, w.time));
            }
        }
        w.step();
        log.extend(w.drain_events());
        for line in w.drain_telemetry() {
            let row: serde_json::Value = serde_json::from_str(&line).unwrap();
            if row["row"] == "comm" {
                let ev: CommEvent = serde_json::from_value(row).unwrap();
                if let CommEvent::Delivered { kind: MessageKind::Command, hops, at, .. } = ev {
                    delivered.push((at, hops.last().unwrap().clone()));
                }
            }
        }
    }
    assert!(submitted.len() > 5);
    let mut applied = 0;
    for (id, t0) in &submitted {
        let Some((t, via)) = applied_at(&log, id) else { continue };
        applied += 1;
        let reached = log
            .iter()
            .find_map(|e| match &e.event {
                Event::CommandDelivered { command_id, via, .. } if command_id == id => Some((e.t, via.clone())),
                _ => None,
            })
            .unwrap_or_else(|| panic!("{id} applied without a delivery"));
        assert_eq!(reached.1, via);
        assert!(*t0 <= reached.0 && reached.0 <= t, "{id}: sent {t0}, reached {}, applied {t}", reached.0);
        if via == "radio" {
            assert!(
                delivered.iter().any(|(at, to)| *to == mug() && *at == reached.0),
                "{id}: no radio delivery at {}",
                reached.0
            );
        } else {
            assert_eq!(via, "acoustic");
        }
    }
    assert!(applied > 0);
    w.network.check_conservation().unwrap();
}
