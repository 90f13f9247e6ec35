//! Batch runs and their output files.

use super::{EngineError, RunStats, World};
use crate::ids::{VehicleId, VehicleKind};
use crate::scenario::ScenarioConfig;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSummary {
    pub vehicle: VehicleId,
    pub kind: VehicleKind,
    pub final_mode: String,
    pub final_charge_wh: f64,
    pub capacity_wh: f64,
    pub yo_count: u32,
    /// Deployment to first recovery state, s. Gliders only.
    pub endurance_s: Option<f64>,
    pub sorties_flown: u32,
    /// CTD samples the vessel has received from this glider.
    pub ctd_samples: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommsSummary {
    pub created: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub duplicates_suppressed: u64,
    pub bytes_transferred: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub planner: String,
    pub sim_time: f64,
    pub ticks: u64,
    pub digest: String,
    pub telemetry_lines: u64,
    pub fault: Option<String>,
    pub stats: RunStats,
    pub comms: CommsSummary,
    pub energy_residual_wh: f64,
    pub vehicles: Vec<VehicleSummary>,
}

impl RunSummary {
    pub fn vehicle(&self, id: &str) -> Option<&VehicleSummary> {
        self.vehicles.iter().find(|v| v.vehicle.as_str() == id)
    }
}

pub fn summarize(world: &World) -> RunSummary {
    let mut vehicles = Vec::new();
    for m in world.mugs.values() {
        vehicles.push(VehicleSummary {
            vehicle: m.id.clone(),
            kind: VehicleKind::Mug,
            final_mode: m.mode.as_str().into(),
            final_charge_wh: m.battery.charge,
            capacity_wh: m.battery.capacity,
            yo_count: m.yo_count,
            endurance_s: m.endurance(),
            sorties_flown: 0,
            ctd_samples: world.kb.ctd_samples.get(&m.id).copied().unwrap_or(0),
        });
    }
    for u in world.uavs.values() {
        vehicles.push(VehicleSummary {
            vehicle: u.id.clone(),
            kind: VehicleKind::Uav,
            final_mode: u.mode.as_str().into(),
            final_charge_wh: u.battery.charge,
            capacity_wh: u.battery.capacity,
            yo_count: 0,
            endurance_s: None,
            sorties_flown: u.sorties_flown,
            ctd_samples: 0,
        });
    }
    vehicles.push(VehicleSummary {
        vehicle: world.usv.id.clone(),
        kind: VehicleKind::Usv,
        final_mode: if world.usv.track.is_empty() { "STATION_KEEPING" } else { "TRACK_FOLLOWING" }.into(),
        final_charge_wh: world.usv.battery.charge,
        capacity_wh: world.usv.battery.capacity,
        yo_count: 0,
        endurance_s: None,
        sorties_flown: 0,
        ctd_samples: 0,
    });
    vehicles.sort_by(|a, b| a.vehicle.cmp(&b.vehicle));
    let l = &world.network.ledger;
    RunSummary {
        seed: world.config.simulation.seed,
        planner: world.planner_name().to_owned(),
        sim_time: world.time,
        ticks: world.tick,
        digest: world.digest_hex(),
        telemetry_lines: world.telemetry_lines(),
        fault: world.fault.clone(),
        stats: world.stats.clone(),
        comms: CommsSummary {
            created: l.created,
            delivered: l.delivered.len() as u64,
            dropped: l.dropped.len() as u64,
            in_flight: world.network.in_flight().len() as u64,
            duplicates_suppressed: l.duplicates_suppressed,
            bytes_transferred: l.bytes_transferred,
        },
        energy_residual_wh: world.energy_residual(),
        vehicles,
    }
}

/// Run to completion in memory, discarding telemetry lines as they are
/// hashed.
pub fn run_in_memory(config: ScenarioConfig) -> Result<(World, RunSummary), EngineError> {
    let mut world = World::new(config)?;
    while !world.finished() {
        world.step();
        world.telemetry.clear();
        world.tracks.clear();
    }
    let summary = summarize(&world);
    Ok((world, summary))
}

struct Sinks {
    telemetry: Option<BufWriter<File>>,
    events: Option<BufWriter<File>>,
    tracks: Option<csv::Writer<File>>,
}

fn create(dir: &Path, name: &str) -> Result<Option<File>, RunError> {
    if name.is_empty() {
        return Ok(None);
    }
    let path = dir.join(name);
    File::create(&path)
        .map(Some)
        .map_err(|source| RunError::Io { path, source })
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Run to completion, writing telemetry, events, tracks and summaries
/// under `dir`. An empty file name in the output config skips that file.
pub fn run_to_dir(config: ScenarioConfig, dir: &Path) -> Result<RunSummary, RunError> {
    run_to_dir_paced(config, dir, |_| {})
}

/// As [`run_to_dir`], calling `pace` after every tick (e.g. to sleep for
/// real-time playback). Pacing never touches the world.
pub fn run_to_dir_paced(
    config: ScenarioConfig,
    dir: &Path,
    mut pace: impl FnMut(&World),
) -> Result<RunSummary, RunError> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    let out = config.output.clone();
    let mut sinks = Sinks {
        telemetry: create(dir, &out.telemetry)?.map(BufWriter::new),
        events: create(dir, &out.events)?.map(BufWriter::new),
        tracks: create(dir, &out.tracks)?.map(csv::Writer::from_writer),
    };
    let mut world = World::new(config)?;
    loop {
        flush(&mut world, &mut sinks, dir)?;
        if world.finished() {
            break;
        }
        world.step();
        pace(&world);
    }
    if let Some(w) = sinks.telemetry.as_mut() {
        w.flush().map_err(io_at(dir))?;
    }
    if let Some(w) = sinks.events.as_mut() {
        w.flush().map_err(io_at(dir))?;
    }
    if let Some(w) = sinks.tracks.as_mut() {
        w.flush().map_err(io_at(dir))?;
    }
    let summary = summarize(&world);
    if !out.summary.is_empty() {
        let path = dir.join(&out.summary);
        let mut w = csv::Writer::from_path(&path)?;
        for v in &summary.vehicles {
            w.serialize(v)?;
        }
        w.flush().map_err(io_at(&path))?;
        let json = path.with_extension("json");
        std::fs::write(&json, serde_json::to_string_pretty(&summary)?).map_err(io_at(&json))?;
    }
    Ok(summary)
}

fn flush(world: &mut World, sinks: &mut Sinks, dir: &Path) -> Result<(), RunError> {
    let lines = world.drain_telemetry();
    if let Some(w) = sinks.telemetry.as_mut() {
        for l in lines {
            writeln!(w, "{l}").map_err(io_at(dir))?;
        }
    }
    let events = world.drain_events();
    if let Some(w) = sinks.events.as_mut() {
        for e in events {
            serde_json::to_writer(&mut *w, &e)?;
            w.write_all(b"\n").map_err(io_at(dir))?;
        }
    }
    let tracks = std::mem::take(&mut world.tracks);
    if let Some(w) = sinks.tracks.as_mut() {
        for r in tracks {
            w.serialize(TrackRow {
                t: r.t,
                vehicle: r.vehicle.as_str(),
                kind: r.kind,
                mode: &r.mode,
                x: r.x,
                y: r.y,
                depth: r.depth,
                altitude: r.altitude,
                battery_wh: r.battery_wh,
            })?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TrackRow<'a> {
    t: f64,
    vehicle: &'a str,
    kind: VehicleKind,
    mode: &'a str,
    x: f64,
    y: f64,
    depth: f64,
    altitude: f64,
    battery_wh: f64,
}

/// SHA-256 over the lines of a telemetry file, matching the run digest.
pub fn digest_file(path: &Path) -> Result<(String, u64), RunError> {
    use sha2::{Digest, Sha256};
    use std::io::BufRead;
    let f = File::open(path).map_err(io_at(path))?;
    let mut h = Sha256::new();
    let mut n = 0;
    for line in std::io::BufReader::new(f).lines() {
        let line = line.map_err(io_at(path))?;
        h.update(line.as_bytes());
        h.update(b"\n");
        n += 1;
    }
    Ok((hex::encode(h.finalize()), n))
}
