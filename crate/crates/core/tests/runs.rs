mod common;

use mugsim::engine::run::digest_file;
use mugsim::{run_in_memory, run_to_dir};

fn short(name: &str, hours: f64) -> mugsim::ScenarioConfig {
    let mut c = common::committed(name);
    c.simulation.duration = hours * 3600.0;
    c
}

#[test]
fn same_seed_same_digest() {
    let (_, a) = run_in_memory(short("golden.toml", 2.0)).unwrap();
    let (_, b) = run_in_memory(short("golden.toml", 2.0)).unwrap();
    assert_eq!(a.digest, b.digest);
    assert_eq!(a.telemetry_lines, b.telemetry_lines);
    assert_eq!(a, b);
}

#[test]
fn dropout_runs_are_seed_driven() {
    let mut c = short("golden.toml", 2.0);
    c.comms.link_model = "horizon-dropout".into();
    c.comms.dropout_probability = 0.3;
    let (_, a) = run_in_memory(c.clone()).unwrap();
    let (_, b) = run_in_memory(c.clone()).unwrap();
    c.simulation.seed += 1;
    let (_, other) = run_in_memory(c).unwrap();
    assert_eq!(a.digest, b.digest);
    assert_ne!(a.digest, other.digest);
}

#[test]
fn telemetry_cadence_does_not_change_the_mission() {
    let mut fine = short("default.toml", 12.0);
    fine.simulation.telemetry_interval = 1.0;
    let mut coarse = fine.clone();
    coarse.simulation.telemetry_interval = 600.0;
    let (_, a) = run_in_memory(fine).unwrap();
    let (_, b) = run_in_memory(coarse).unwrap();
    assert!(a.telemetry_lines > b.telemetry_lines);
    assert_ne!(a.digest, b.digest);
    assert_eq!(a.vehicles, b.vehicles);
    assert_eq!(a.stats, b.stats);
    assert_eq!(a.comms, b.comms);
    assert_eq!(a.sim_time, b.sim_time);
}

#[test]
fn zero_duration_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = common::committed("default.toml");
    c.simulation.duration = 0.0;
    let s = run_to_dir(c, dir.path()).unwrap();
    assert_eq!(s.ticks, 0);
    assert_eq!(s.sim_time, 0.0);
    assert!(s.fault.is_none());
    assert_eq!(s.stats.sorties_launched, 0);
    let telemetry = std::fs::read_to_string(dir.path().join("telemetry.jsonl")).unwrap();
    assert_eq!(telemetry.lines().count(), 1, "{telemetry}");
    assert!(telemetry.contains("\"row\":\"header\""));
    let events = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    assert!(events.is_empty());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["ticks"], 0);
    assert_eq!(summary["vehicles"].as_array().unwrap().len(), 3);
}

#[test]
fn files_match_the_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = short("golden.toml", 1.0);
    let on_disk = run_to_dir(c.clone(), dir.path()).unwrap();
    let (_, in_memory) = run_in_memory(c).unwrap();
    assert_eq!(on_disk, in_memory);
    let (hex, lines) = digest_file(&dir.path().join("telemetry.jsonl")).unwrap();
    assert_eq!(hex, on_disk.digest);
    assert_eq!(lines, on_disk.telemetry_lines);

    let mut tracks = csv::Reader::from_path(dir.path().join("tracks.csv")).unwrap();
    let headers = tracks.headers().unwrap().clone();
    assert_eq!(&headers[0], "t");
    assert!(headers.iter().any(|h| h == "battery_wh"));
    assert!(tracks.records().count() > 0);

    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + on_disk.vehicles.len());
    for line in std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["t"].is_number() && v["event"].is_string(), "{line}");
    }
}

#[test]
fn empty_file_names_skip_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = short("default.toml", 0.1);
    c.output.tracks = String::new();
    c.output.events = String::new();
    run_to_dir(c, dir.path()).unwrap();
    assert!(dir.path().join("telemetry.jsonl").exists());
    assert!(!dir.path().join("tracks.csv").exists());
    assert!(!dir.path().join("events.jsonl").exists());
}
