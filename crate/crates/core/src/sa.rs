//! Operator situation awareness: the vessel's knowledge base, operator
//! commands, snapshots and incremental updates.

use crate::comms::StatusReport;
use crate::coordinator::SortiePlan;
use crate::ids::{VehicleId, VehicleKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

pub const SNAPSHOT_SCHEMA: &str = "mugsim.sa";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbEntry {
    pub vehicle: VehicleId,
    pub kind: VehicleKind,
    pub mode: String,
    pub position: [f64; 2],
    pub depth: f64,
    pub altitude: f64,
    pub sigma: f64,
    pub battery_wh: f64,
    pub yo_count: u32,
    pub task: Option<String>,
    /// When the vehicle sampled this state.
    pub sampled_at: f64,
    /// When the report reached the vessel.
    pub reported_at: f64,
    /// Observed directly by the vessel rather than reported by radio.
    pub first_hand: bool,
    pub in_bay: bool,
}

impl KbEntry {
    pub fn from_report(r: &StatusReport, reported_at: f64) -> Self {
        Self {
            vehicle: r.vehicle.clone(),
            kind: r.kind,
            mode: r.mode.clone(),
            position: r.position,
            depth: r.depth,
            altitude: r.altitude,
            sigma: r.sigma,
            battery_wh: r.battery_wh,
            yo_count: r.yo_count,
            task: r.task.clone(),
            sampled_at: r.sampled_at,
            reported_at,
            first_hand: false,
            in_bay: false,
        }
    }

    /// Same content apart from timestamps.
    fn same_state(&self, other: &KbEntry) -> bool {
        let strip = |e: &KbEntry| KbEntry {
            sampled_at: 0.0,
            reported_at: 0.0,
            ..e.clone()
        };
        strip(self) == strip(other)
    }
}

/// What the vessel knows. The vessel-side view updates on delivery; the
/// operator-side view lags by the shore uplink latency.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub local: BTreeMap<VehicleId, KbEntry>,
    pub visible: BTreeMap<VehicleId, KbEntry>,
    uplink: VecDeque<(f64, KbEntry)>,
    pub uplink_latency: f64,
    /// CTD samples delivered per glider.
    pub ctd_samples: BTreeMap<VehicleId, u64>,
    pub recovery_requested: BTreeMap<VehicleId, f64>,
}

impl KnowledgeBase {
    pub fn new(uplink_latency: f64) -> Self {
        Self {
            uplink_latency,
            ..Self::default()
        }
    }

    /// A radio report delivered to the vessel at `now`. Older samples than
    /// the current entry are ignored.
    pub fn ingest(&mut self, report: &StatusReport, now: f64) {
        if let Some(e) = self.local.get(&report.vehicle) {
            if e.sampled_at > report.sampled_at {
                return;
            }
        }
        let entry = KbEntry::from_report(report, now);
        self.local.insert(entry.vehicle.clone(), entry.clone());
        self.uplink.push_back((now + self.uplink_latency, entry));
    }

    /// Direct observation by the vessel. The vessel's own state is streamed
    /// to the operator continuously, so it skips the uplink delay.
    pub fn observe(&mut self, entry: KbEntry) -> bool {
        match self.local.get_mut(&entry.vehicle) {
            Some(e) if e.first_hand && e.same_state(&entry) => return false,
            Some(e) => e.clone_from(&entry),
            None => {
                self.local.insert(entry.vehicle.clone(), entry.clone());
            }
        }
        match self.visible.get_mut(&entry.vehicle) {
            Some(v) => *v = entry,
            None => {
                self.visible.insert(entry.vehicle.clone(), entry);
            }
        }
        true
    }

    pub fn count_ctd(&mut self, vehicle: &VehicleId, samples: u32) {
        *self.ctd_samples.entry(vehicle.clone()).or_default() += u64::from(samples);
    }

    /// Release entries whose uplink latency has elapsed. Returns the ids
    /// whose operator-side entry changed.
    pub fn advance(&mut self, now: f64) -> Vec<VehicleId> {
        let mut changed = Vec::new();
        while self.uplink.front().is_some_and(|(t, _)| *t <= now + 1e-9) {
            let (_, entry) = self.uplink.pop_front().expect("front checked");
            let id = entry.vehicle.clone();
            self.visible.insert(id.clone(), entry);
            if !changed.contains(&id) {
                changed.push(id);
            }
        }
        changed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verb {
    SetTargetDepth { depth: f64 },
    SetDropPoint { point: [f64; 2] },
    RequestRecovery,
    AbortSortie,
    RetaskUsvTrack { track: Vec<[f64; 2]> },
    PauseSim,
    ResumeSim,
    SetSimSpeed { speed: f64 },
}

impl Verb {
    pub fn name(&self) -> &'static str {
        match self {
            Verb::SetTargetDepth { .. } => "SET_TARGET_DEPTH",
            Verb::SetDropPoint { .. } => "SET_DROP_POINT",
            Verb::RequestRecovery => "REQUEST_RECOVERY",
            Verb::AbortSortie => "ABORT_SORTIE",
            Verb::RetaskUsvTrack { .. } => "RETASK_USV_TRACK",
            Verb::PauseSim => "PAUSE_SIM",
            Verb::ResumeSim => "RESUME_SIM",
            Verb::SetSimSpeed { .. } => "SET_SIM_SPEED",
        }
    }

    pub fn is_sim_control(&self) -> bool {
        matches!(self, Verb::PauseSim | Verb::ResumeSim | Verb::SetSimSpeed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorCommand {
    pub command_id: String,
    #[serde(default)]
    pub target: Option<VehicleId>,
    #[serde(flatten)]
    pub verb: Verb,
    #[serde(default)]
    pub issued_at: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    Accepted,
    Rejected,
    QueuedForUplink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandAck {
    pub command_id: String,
    pub status: AckStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
    /// True when this id was seen before and nothing was done.
    #[serde(default)]
    pub duplicate: bool,
}

impl CommandAck {
    pub fn accepted(id: &str) -> Self {
        Self {
            command_id: id.to_owned(),
            status: AckStatus::Accepted,
            reason: None,
            duplicate: false,
        }
    }

    pub fn queued(id: &str) -> Self {
        Self {
            status: AckStatus::QueuedForUplink,
            ..Self::accepted(id)
        }
    }

    pub fn rejected(id: &str, reason: impl Into<String>) -> Self {
        Self {
            status: AckStatus::Rejected,
            reason: Some(reason.into()),
            ..Self::accepted(id)
        }
    }
}

/// Parse a JSON command document. Malformed input becomes a rejection that
/// carries whatever command id could be recovered.
pub fn parse_command(text: &str) -> Result<OperatorCommand, CommandAck> {
    serde_json::from_str(text).map_err(|e| {
        let id = serde_json::from_str::<serde_json::Value>(text)
            .ok()
            .and_then(|v| v.get("command_id").and_then(|c| c.as_str()).map(str::to_owned))
            .unwrap_or_default();
        CommandAck::rejected(&id, format!("malformed command: {e}"))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleView {
    #[serde(flatten)]
    pub entry: KbEntry,
    /// Seconds since the report reached the vessel.
    pub staleness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsvView {
    pub id: VehicleId,
    pub position: [f64; 2],
    pub track: Vec<[f64; 2]>,
    pub battery_wh: f64,
    pub dock: Option<VehicleId>,
    pub bay: Vec<VehicleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkView {
    pub a: VehicleId,
    pub b: VehicleId,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeferredView {
    pub subject: String,
    pub reason: String,
    pub retry_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthView {
    pub vehicle: VehicleId,
    pub mode: String,
    pub position: [f64; 2],
    pub depth: f64,
    pub altitude: f64,
    pub battery_wh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub sim_time: f64,
    pub tick: u64,
    pub paused: bool,
    pub speed: f64,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema: String,
    pub version: u32,
    pub clock: SimClock,
    pub vehicles: Vec<VehicleView>,
    pub usv: UsvView,
    pub plans: Vec<SortiePlan>,
    pub deferred: Vec<DeferredView>,
    pub links: Vec<LinkView>,
    pub events: Vec<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truth: Option<Vec<TruthView>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Update {
    Snapshot(Box<Snapshot>),
    Delta {
        sim_time: f64,
        tick: u64,
        clock: SimClock,
        vehicles: Vec<VehicleView>,
        removed: Vec<VehicleId>,
        #[serde(skip_serializing_if = "Option::is_none")]
        usv: Option<UsvView>,
        #[serde(skip_serializing_if = "Option::is_none")]
        plans: Option<Vec<SortiePlan>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        deferred: Option<Vec<DeferredView>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        links: Option<Vec<LinkView>>,
        events: Vec<serde_json::Value>,
    },
    Heartbeat {
        sim_time: f64,
        tick: u64,
        clock: SimClock,
    },
    Overflow {
        message: String,
    },
}

impl Update {
    pub fn sim_time(&self) -> Option<f64> {
        match self {
            Update::Snapshot(s) => Some(s.clock.sim_time),
            Update::Delta { sim_time, .. } | Update::Heartbeat { sim_time, .. } => Some(*sim_time),
            Update::Overflow { .. } => None,
        }
    }
}

/// One consolidated update taking `prev` to `next`. Vehicle entries are
/// compared ignoring staleness, which advances every tick anyway.
pub fn diff(prev: &Snapshot, next: &Snapshot, new_events: Vec<serde_json::Value>) -> Update {
    let key = |v: &VehicleView| v.entry.vehicle.clone();
    let before: BTreeMap<_, _> = prev.vehicles.iter().map(|v| (key(v), &v.entry)).collect();
    let after: BTreeMap<_, _> = next.vehicles.iter().map(|v| (key(v), &v.entry)).collect();
    let vehicles: Vec<VehicleView> = next
        .vehicles
        .iter()
        .filter(|v| before.get(&key(v)) != Some(&&v.entry))
        .cloned()
        .collect();
    let removed: Vec<VehicleId> = before.keys().filter(|k| !after.contains_key(*k)).cloned().collect();
    let usv = (prev.usv != next.usv).then(|| next.usv.clone());
    let plans = (prev.plans != next.plans).then(|| next.plans.clone());
    let deferred = (prev.deferred != next.deferred).then(|| next.deferred.clone());
    let links = (prev.links != next.links).then(|| next.links.clone());
    let clock_changed = prev.clock.paused != next.clock.paused
        || prev.clock.speed != next.clock.speed
        || prev.clock.finished != next.clock.finished;
    if vehicles.is_empty()
        && removed.is_empty()
        && usv.is_none()
        && plans.is_none()
        && deferred.is_none()
        && links.is_none()
        && new_events.is_empty()
        && !clock_changed
    {
        return Update::Heartbeat {
            sim_time: next.clock.sim_time,
            tick: next.clock.tick,
            clock: next.clock.clone(),
        };
    }
    Update::Delta {
        sim_time: next.clock.sim_time,
        tick: next.clock.tick,
        clock: next.clock.clone(),
        vehicles,
        removed,
        usv,
        plans,
        deferred,
        links,
        events: new_events,
    }
}

/// Apply a delta to a snapshot, as a client would.
pub fn apply_update(snap: &mut Snapshot, update: &Update) {
    match update {
        Update::Snapshot(s) => *snap = (**s).clone(),
        Update::Heartbeat { clock, .. } => snap.clock = clock.clone(),
        Update::Delta {
            clock,
            vehicles,
            removed,
            usv,
            plans,
            deferred,
            links,
            events,
            ..
        } => {
            snap.clock = clock.clone();
            snap.vehicles.retain(|v| !removed.contains(&v.entry.vehicle));
            for v in vehicles {
                match snap.vehicles.iter_mut().find(|x| x.entry.vehicle == v.entry.vehicle) {
                    Some(x) => *x = v.clone(),
                    None => snap.vehicles.push(v.clone()),
                }
            }
            snap.vehicles.sort_by(|a, b| a.entry.vehicle.cmp(&b.entry.vehicle));
            if let Some(u) = usv {
                snap.usv = u.clone();
            }
            if let Some(p) = plans {
                snap.plans = p.clone();
            }
            if let Some(d) = deferred {
                snap.deferred = d.clone();
            }
            if let Some(l) = links {
                snap.links = l.clone();
            }
            snap.events.extend(events.iter().cloned());
        }
        Update::Overflow { .. } => {}
    }
}
