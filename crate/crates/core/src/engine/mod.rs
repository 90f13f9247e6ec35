//! Fixed-step world simulation.
//!
//! Each tick runs, in order: environment update, agent ticks in ascending
//! vehicle id, the radio network step, the coordinator (every decision
//! interval), event dispatch, and telemetry emission.
//!
//! Random draws come from one ChaCha8 stream seeded by the scenario. Within
//! a tick the order is: GPS fixes in ascending vehicle id (two normal draws
//! each), then link dropout draws in ascending node-pair order.

pub mod audit;
pub mod run;
pub mod telemetry;

use crate::agents::mug::{mug_tick, MugAgent, MugContext, MugEvent, MugMode};
use crate::agents::uav::{uav_tick, TargetView, UavAgent, UavContext, UavEvent, UavMode};
use crate::agents::usv::{usv_tick, UsvAgent};
use crate::comms::{
    acoustic_command, comms_step, CommEvent, CommandEnvelope, LinkModel, LinkTable, Network,
    NodeRole, Payload, RadioNode, StatusReport, VehicleCommand,
};
use crate::coordinator::{
    forecast_energy, plan_recovery, plan_relay, Decision, EnergyForecast, ForecastInput, LazyForecast, KnownMug,
    Objective, PlanOutcome, PlannerView, RelayStats, SortiePlan, SortiePlanner, UavForecastState,
};
use crate::ids::{VehicleId, VehicleKind};
use crate::registry;
use crate::sa::{
    CommandAck, DeferredView, KbEntry, KnowledgeBase, LinkView, OperatorCommand,
    SimClock, Snapshot, TruthView, UsvView, Verb, VehicleView, SNAPSHOT_SCHEMA, SNAPSHOT_VERSION,
};
use crate::scenario::{ForcedKind, ScenarioConfig};
use audit::EnergyAudit;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use telemetry::{Row, VehicleRow, TELEMETRY_SCHEMA, TELEMETRY_VERSION};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Registry(#[from] registry::UnknownStrategy),
    #[error(transparent)]
    Comms(#[from] crate::comms::CommsError),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Mode {
        vehicle: VehicleId,
        from: String,
        to: String,
        cause: String,
    },
    Plan {
        plan: SortiePlan,
    },
    Deferred {
        subject: String,
        reason: String,
        retry_at: f64,
    },
    Uav {
        uav: VehicleId,
        detail: UavEvent,
    },
    ForcedRefused {
        uav: VehicleId,
        kind: ForcedKind,
        reason: String,
    },
    Command {
        verb: String,
        target: Option<VehicleId>,
        ack: CommandAck,
    },
    /// A command reached the vehicle over `via` ("radio" or "acoustic").
    CommandDelivered {
        vehicle: VehicleId,
        command_id: String,
        via: String,
    },
    CommandApplied {
        vehicle: VehicleId,
        command_id: String,
        via: String,
    },
    Fault {
        message: String,
    },
}

impl Event {
    pub fn is_plan(&self) -> bool {
        matches!(
            self,
            Event::Plan { .. } | Event::Deferred { .. } | Event::ForcedRefused { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub sorties_launched: u64,
    pub sorties_deferred: u64,
    pub forced_refused: u64,
    pub pickups: u64,
    pub failed_pickups: u64,
    pub deployments: u64,
    pub returns: u64,
    pub emergency_lands: u64,
    /// Returns that docked below the plan's reserve.
    pub reserve_violations: u64,
    /// Smallest (charge at dock - reserve) over all returns, Wh.
    pub min_return_margin: Option<f64>,
    pub commands_applied: u64,
    pub acoustic_commands: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimControl {
    pub paused: bool,
    /// Real-time multiplier for paced runs.
    pub speed: f64,
}

impl Default for SimControl {
    fn default() -> Self {
        Self {
            paused: false,
            speed: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AcousticPending {
    due_tick: u64,
    mug: VehicleId,
    envelope: CommandEnvelope,
}

/// The single authoritative simulation state.
pub struct World {
    pub config: ScenarioConfig,
    pub time: f64,
    pub tick: u64,
    rng: ChaCha8Rng,
    pub mugs: BTreeMap<VehicleId, MugAgent>,
    pub uavs: BTreeMap<VehicleId, UavAgent>,
    pub usv: UsvAgent,
    pub network: Network,
    link_model: Box<dyn LinkModel>,
    planner: Box<dyn SortiePlanner>,
    pub links: LinkTable,
    pub kb: KnowledgeBase,
    pub pending_deploys: Vec<(VehicleId, [f64; 2])>,
    pub deferred: BTreeMap<String, (String, f64)>,
    next_plan_id: u64,
    acoustic: Vec<AcousticPending>,
    /// Channel each glider command arrived on.
    command_via: BTreeMap<String, &'static str>,
    forced_done: Vec<bool>,
    order: Vec<(VehicleId, VehicleKind)>,
    pub stats: RunStats,
    pub audit: EnergyAudit,
    pub commands: BTreeMap<String, CommandAck>,
    pub control: SimControl,
    pub fault: Option<String>,
    /// Events produced since the last drain.
    pub events: Vec<EventRecord>,
    /// Telemetry lines produced since the last drain.
    pub telemetry: Vec<String>,
    /// Vehicle rows produced since the last drain.
    pub tracks: Vec<VehicleRow>,
    digest: Sha256,
    telemetry_lines: u64,
    pub comm_events_total: u64,
    pub debug_truth: bool,
}

fn mode_name(m: MugMode) -> String {
    m.as_str().to_owned()
}

impl World {
    pub fn new(config: ScenarioConfig) -> Result<Self, EngineError> {
        crate::scenario::validate(&config)?;
        let dt = config.simulation.dt;
        let link_model = registry::link_models().build(&config.comms.link_model, &config.comms)?;
        let planner = registry::planners().build(&config.coordinator.planner, &config.coordinator)?;
        let env = config.environment;
        let mut usv = UsvAgent::new(config.usv.clone());
        let mut network = Network::new(config.comms.clone(), dt);
        let radio = |id: &VehicleId, role| {
            let mut n = RadioNode::new(id.clone(), role);
            n.frequency = config.comms.frequency;
            n.bandwidth = config.comms.bandwidth;
            n
        };
        network.add_node(radio(&usv.id, NodeRole::Surface))?;
        let mut uavs = BTreeMap::new();
        for u in &config.uav {
            network.add_node(radio(&u.id, NodeRole::Aerial))?;
            let mut agent = UavAgent::new(u.clone(), usv.position);
            agent.step = config.simulation.dt;
            uavs.insert(u.id.clone(), agent);
        }
        let mut mugs = BTreeMap::new();
        let mut pending_deploys = Vec::new();
        for m in &config.mug {
            network.add_node(radio(&m.id, NodeRole::Glider))?;
            let mut agent = MugAgent::new(m.clone(), &env);
            if let Some(drop) = m.drop_point {
                usv.mug_bay.insert(m.id.clone());
                agent.kin.position = usv.position;
                pending_deploys.push((m.id.clone(), drop));
            }
            mugs.insert(m.id.clone(), agent);
        }
        let mut order: Vec<(VehicleId, VehicleKind)> = mugs
            .keys()
            .map(|k| (k.clone(), VehicleKind::Mug))
            .chain(uavs.keys().map(|k| (k.clone(), VehicleKind::Uav)))
            .chain(std::iter::once((usv.id.clone(), VehicleKind::Usv)))
            .collect();
        order.sort();
        let audit = EnergyAudit {
            initial_total: usv.battery.charge
                + uavs.values().map(|u| u.battery.charge).sum::<f64>()
                + mugs.values().map(|m| m.battery.charge).sum::<f64>(),
            ..EnergyAudit::default()
        };
        let mut world = Self {
            time: 0.0,
            tick: 0,
            rng: ChaCha8Rng::seed_from_u64(config.simulation.seed),
            mugs,
            uavs,
            usv,
            network,
            link_model,
            planner,
            links: LinkTable::default(),
            kb: KnowledgeBase::new(config.comms.uplink_latency),
            pending_deploys,
            deferred: BTreeMap::new(),
            next_plan_id: 1,
            acoustic: Vec::new(),
            command_via: BTreeMap::new(),
            forced_done: vec![false; config.forced_sortie.len()],
            order,
            stats: RunStats::default(),
            audit,
            commands: BTreeMap::new(),
            control: SimControl::default(),
            fault: None,
            events: Vec::new(),
            telemetry: Vec::new(),
            tracks: Vec::new(),
            digest: Sha256::new(),
            telemetry_lines: 0,
            comm_events_total: 0,
            debug_truth: false,
            config,
        };
        world.sync_radio();
        world.observe_first_hand();
        world.kb.advance(0.0);
        let header = Row::Header {
            schema: TELEMETRY_SCHEMA.into(),
            version: TELEMETRY_VERSION,
            seed: world.config.simulation.seed,
            dt,
            duration: world.config.simulation.duration,
            telemetry_interval: world.config.simulation.telemetry_interval,
        };
        world.emit_row(&header);
        Ok(world)
    }

    pub fn dt(&self) -> f64 {
        self.config.simulation.dt
    }

    pub fn planner_name(&self) -> &str {
        self.planner.name()
    }

    pub fn total_ticks(&self) -> u64 {
        (self.config.simulation.duration / self.dt() + 1e-9).floor() as u64
    }

    pub fn finished(&self) -> bool {
        self.fault.is_some() || self.tick >= self.total_ticks()
    }

    /// SHA-256 of every telemetry line produced so far.
    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest.clone().finalize())
    }

    pub fn telemetry_lines(&self) -> u64 {
        self.telemetry_lines
    }

    fn emit_row(&mut self, row: &Row) {
        let line = serde_json::to_string(row).expect("telemetry rows serialize");
        self.digest.update(line.as_bytes());
        self.digest.update(b"\n");
        self.telemetry_lines += 1;
        self.telemetry.push(line);
    }

    fn log(&mut self, event: Event) {
        let record = EventRecord { t: self.time, event };
        if record.event.is_plan() || matches!(record.event, Event::Fault { .. }) {
            self.emit_row(&Row::Plan(record.clone()));
        }
        self.events.push(record);
    }

    fn fail(&mut self, message: String) {
        if self.fault.is_none() {
            self.log(Event::Fault {
                message: message.clone(),
            });
            self.fault = Some(message);
        }
    }

    fn ticks_per(&self, interval: f64) -> u64 {
        ((interval / self.dt()).round() as u64).max(1)
    }

    /// Advance one tick. Does nothing once finished.
    pub fn step(&mut self) {
        if self.finished() {
            return;
        }
        let now = self.time;
        let dt = self.dt();
        let env = self.config.environment;

        // (2) agents in ascending id
        let order = self.order.clone();
        let mut uav_events: Vec<(VehicleId, UavEvent)> = Vec::new();
        for (id, kind) in &order {
            match kind {
                VehicleKind::Mug => self.tick_mug(id, now, dt, &env),
                VehicleKind::Uav => {
                    let ev = self.tick_uav(id, now, dt);
                    uav_events.extend(ev.into_iter().map(|e| (id.clone(), e)));
                }
                VehicleKind::Usv => {
                    let t = usv_tick(&mut self.usv, &env, now, dt);
                    self.audit.harvested += t.harvested;
                    self.audit.consumed += t.hotel;
                    self.audit.curtailed += t.battery.curtailed;
                    self.audit.unserved += t.battery.unserved;
                }
            }
        }

        // (3) radio network
        self.sync_radio();
        self.links = LinkTable::evaluate(&self.network.nodes, self.link_model.as_ref(), &mut self.rng);
        let comm = comms_step(&mut self.network, &self.links, now);
        self.handle_comm_events(comm);
        self.deliver_inboxes(now);
        if self.tick.is_multiple_of(self.config.simulation.audit_every) {
            if let Err(e) = self.network.check_conservation() {
                self.fail(e.to_string());
                return;
            }
        }

        // (4) coordinator
        if self.tick.is_multiple_of(self.ticks_per(self.config.coordinator.decision_interval)) {
            self.coordinate(now);
        }

        // (5) event dispatch
        for (uav, e) in uav_events {
            self.dispatch_uav_event(&uav, e, now);
        }
        self.deliver_acoustic(now);
        self.charge_docked(dt);
        self.observe_first_hand();
        self.kb.advance(now + dt);
        self.check_invariants();

        // (6) telemetry
        if self.tick.is_multiple_of(self.ticks_per(self.config.simulation.telemetry_interval)) {
            self.emit_vehicle_rows();
        }
        self.tick += 1;
        self.time = self.tick as f64 * dt;
    }

    fn tick_mug(&mut self, id: &VehicleId, now: f64, dt: f64, env: &crate::physics::Environment) {
        let queue_len = self.network.queued(id);
        let usv_id = self.usv.id.clone();
        let agent = self.mugs.get_mut(id).expect("mug in order");
        if agent.carried_by.is_some() || !agent.mode.in_water() {
            return;
        }
        let ctx = MugContext {
            now,
            dt,
            env,
            queue_len,
        };
        let before_cmds = agent.applied_commands.len();
        let out = match mug_tick(agent, &ctx, &mut self.rng) {
            Ok(o) => o,
            Err(e) => {
                let msg = format!("{id}: {e}");
                self.fail(msg);
                return;
            }
        };
        let applied: Vec<(String, f64)> = agent.applied_commands[before_cmds..].to_vec();
        self.audit.consumed += out.energy.total();
        self.audit.curtailed += out.battery.curtailed;
        self.audit.unserved += out.battery.unserved;
        for (from, to, cause) in out.transitions {
            self.log(Event::Mode {
                vehicle: id.clone(),
                from: mode_name(from),
                to: mode_name(to),
                cause: format!("{cause:?}"),
            });
        }
        for (command_id, _) in applied {
            self.stats.commands_applied += 1;
            let via = self.command_via.get(&command_id).copied().unwrap_or("onboard");
            self.log(Event::CommandApplied {
                vehicle: id.clone(),
                command_id,
                via: via.into(),
            });
        }
        for payload in out.telemetry {
            match self.network.originate(id, &usv_id, payload, now) {
                Ok((_, ev)) => self.handle_comm_events(ev),
                Err(e) => {
                    self.fail(format!("{id}: {e}"));
                    return;
                }
            }
        }
    }

    fn tick_uav(&mut self, id: &VehicleId, now: f64, dt: f64) -> Vec<UavEvent> {
        let home = self.usv.position;
        let home_speed = self.usv.effective_speed();
        let usv_id = self.usv.id.clone();
        let target = {
            let agent = &self.uavs[id];
            agent
                .sortie
                .as_ref()
                .and_then(|s| s.plan.objective.mug().cloned())
                .and_then(|m| self.mugs.get(&m))
                .map(|m| TargetView {
                    position: m.kin.position,
                    recoverable: m.carried_by.is_none()
                        && !m.kin.is_submerged()
                        && matches!(m.mode, MugMode::WaitRecovery | MugMode::FaultLowBattery),
                })
        };
        let agent = self.uavs.get_mut(id).expect("uav in order");
        let before = agent.mode;
        let out = uav_tick(
            agent,
            &UavContext {
                now,
                dt,
                home,
                home_speed,
                target,
            },
        );
        let after = agent.mode;
        let status = out.emit_status.then(|| uav_status(agent, now));
        self.audit.consumed += out.consumed;
        self.audit.unserved += out.unserved;
        if before != after {
            self.log(Event::Mode {
                vehicle: id.clone(),
                from: before.as_str().into(),
                to: after.as_str().into(),
                cause: "flight".into(),
            });
        }
        if let Some(s) = status {
            match self.network.originate(id, &usv_id, Payload::Status(s), now) {
                Ok((_, ev)) => self.handle_comm_events(ev),
                Err(e) => self.fail(format!("{id}: {e}")),
            }
        }
        out.events
    }

    /// Copy agent positions and radio power into the network.
    fn sync_radio(&mut self) {
        let usv = &self.usv;
        if let Some(n) = self.network.nodes.get_mut(&usv.id) {
            n.position = [usv.position[0], usv.position[1], usv.config.mast_height];
            n.powered = true;
        }
        for u in self.uavs.values() {
            if let Some(n) = self.network.nodes.get_mut(&u.id) {
                n.position = [u.position[0], u.position[1], u.altitude];
                n.powered = u.mode != UavMode::EmergencyLand;
            }
        }
        for m in self.mugs.values() {
            if let Some(n) = self.network.nodes.get_mut(&m.id) {
                n.position = [m.kin.position[0], m.kin.position[1], m.antenna_z()];
                n.powered = m.carried_by.is_none() && m.radio_powered();
            }
        }
    }

    fn handle_comm_events(&mut self, events: Vec<CommEvent>) {
        for e in events {
            self.comm_events_total += 1;
            if matches!(e, CommEvent::Transferred { .. }) {
                continue;
            }
            let row = Row::Comm { t: self.time, event: e };
            self.emit_row(&row);
        }
    }

    fn deliver_inboxes(&mut self, now: f64) {
        let usv_id = self.usv.id.clone();
        for msg in self.network.drain_inbox(&usv_id) {
            match &msg.payload {
                Payload::Status(r) => self.kb.ingest(r, now),
                Payload::CtdBatch { samples, .. } => self.kb.count_ctd(&msg.id.origin, *samples),
                _ => {}
            }
        }
        let mug_ids: Vec<VehicleId> = self.mugs.keys().cloned().collect();
        for id in mug_ids {
            for msg in self.network.drain_inbox(&id) {
                if let Payload::Command(env) = msg.payload {
                    self.queue_mug_command(&id, env, "radio");
                }
            }
        }
        let uav_ids: Vec<VehicleId> = self.uavs.keys().cloned().collect();
        for id in uav_ids {
            for msg in self.network.drain_inbox(&id) {
                if let Payload::Command(env) = msg.payload {
                    if env.command == VehicleCommand::AbortSortie {
                        self.log(Event::CommandDelivered {
                            vehicle: id.clone(),
                            command_id: env.command_id.clone(),
                            via: "radio".into(),
                        });
                        let uav = self.uavs.get_mut(&id).expect("known uav");
                        if uav.abort() {
                            self.stats.commands_applied += 1;
                        }
                        self.log(Event::CommandApplied {
                            vehicle: id.clone(),
                            command_id: env.command_id,
                            via: "radio".into(),
                        });
                    }
                }
            }
        }
    }

    fn queue_mug_command(&mut self, id: &VehicleId, env: CommandEnvelope, via: &'static str) {
        let m = self.mugs.get_mut(id).expect("known mug");
        let seen = m.pending_commands.iter().any(|c| c.command_id == env.command_id)
            || m.applied_commands.iter().any(|(c, _)| *c == env.command_id);
        if !seen {
            let command_id = env.command_id.clone();
            m.pending_commands.push(env);
            self.command_via.insert(command_id.clone(), via);
            self.log(Event::CommandDelivered {
                vehicle: id.clone(),
                command_id,
                via: via.into(),
            });
        }
    }

    fn deliver_acoustic(&mut self, _now: f64) {
        let tick = self.tick;
        let (due, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.acoustic)
            .into_iter()
            .partition(|a| a.due_tick <= tick);
        self.acoustic = rest;
        for a in due {
            self.stats.acoustic_commands += 1;
            self.queue_mug_command(&a.mug, a.envelope, "acoustic");
        }
    }

    fn charge_docked(&mut self, dt: f64) {
        let mut charging = None;
        for u in self.uavs.values_mut() {
            if u.is_docked() && u.battery.room() > 1e-12 && self.usv.battery.charge > 0.0 {
                let p = u.config.power.recharge_power;
                let moved = crate::powertrain::transfer(&mut self.usv.battery, &mut u.battery, p, dt);
                self.audit.transferred += moved;
                charging = Some(u.id.clone());
                break;
            }
        }
        self.usv.dock_occupied = charging;
    }

    fn observe_first_hand(&mut self) {
        let now = self.time;
        let usv = &self.usv;
        let entry = KbEntry {
            vehicle: usv.id.clone(),
            kind: VehicleKind::Usv,
            mode: if usv.track.is_empty() { "STATION_KEEPING" } else { "TRACK_FOLLOWING" }.into(),
            position: usv.position,
            depth: 0.0,
            altitude: usv.config.mast_height,
            sigma: 0.0,
            battery_wh: usv.battery.charge,
            yo_count: 0,
            task: Some(format!("{} waypoints", usv.track.len())),
            sampled_at: now,
            reported_at: now,
            first_hand: true,
            in_bay: false,
        };
        self.kb.observe(entry);
        let docked: Vec<KbEntry> = self
            .uavs
            .values()
            .filter(|u| u.is_docked())
            .map(|u| KbEntry {
                vehicle: u.id.clone(),
                kind: VehicleKind::Uav,
                mode: u.mode.as_str().into(),
                position: u.position,
                depth: 0.0,
                altitude: u.altitude,
                sigma: 0.0,
                battery_wh: u.battery.charge,
                yo_count: 0,
                task: None,
                sampled_at: now,
                reported_at: now,
                first_hand: true,
                in_bay: false,
            })
            .collect();
        for e in docked {
            self.kb.observe(e);
        }
        let bay: Vec<KbEntry> = self
            .usv
            .mug_bay
            .iter()
            .filter_map(|id| self.mugs.get(id))
            .map(|m| KbEntry {
                vehicle: m.id.clone(),
                kind: VehicleKind::Mug,
                mode: m.mode.as_str().into(),
                position: self.usv.position,
                depth: 0.0,
                altitude: 0.0,
                sigma: 0.0,
                battery_wh: m.battery.charge,
                yo_count: m.yo_count,
                task: Some("in bay".into()),
                sampled_at: now,
                reported_at: now,
                first_hand: true,
                in_bay: true,
            })
            .collect();
        for e in bay {
            self.kb.observe(e);
        }
    }

    fn known_mugs(&self) -> Vec<KnownMug> {
        self.mugs
            .values()
            .map(|m| {
                let e = self.kb.local.get(&m.id);
                KnownMug {
                    id: m.id.clone(),
                    position: e.map(|e| e.position).unwrap_or(m.config.position),
                    sigma: e.map(|e| e.sigma).unwrap_or(m.config.nav.gps_noise),
                    mode: e.map(|e| e.mode.clone()).unwrap_or_else(|| "UNKNOWN".into()),
                    in_bay: self.usv.mug_bay.contains(&m.id),
                    carried: m.carried_by.is_some(),
                    recovery_requested: self.kb.recovery_requested.contains_key(&m.id),
                    drift: match e {
                        Some(e) if e.depth <= 0.0 => self.config.environment.current.velocity(e.position, 0.0),
                        _ => [0.0, 0.0],
                    },
                    fix_age: e.map_or(0.0, |e| (self.time - e.sampled_at).max(0.0)),
                }
            })
            .collect()
    }

    fn relay_stats(&self) -> Vec<RelayStats> {
        self.mugs
            .values()
            .filter(|m| m.carried_by.is_none() && m.radio_powered())
            .map(|m| {
                let node = &self.network.nodes[&m.id];
                RelayStats {
                    mug: m.id.clone(),
                    queued: node.queue.len(),
                    queued_bytes: node.queue_bytes(),
                    surfaced: !m.kin.is_submerged(),
                    direct_link: self.links.available(&m.id, &self.usv.id),
                    position: m.nav.position,
                }
            })
            .collect()
    }

    pub fn forecast(&self, now: f64) -> EnergyForecast {
        let uavs = self
            .uavs
            .values()
            .filter(|u| u.mode != UavMode::EmergencyLand)
            .map(|u| {
                let (returns_at, remaining) = match &u.sortie {
                    Some(s) => (
                        Some(s.plan.expected_return.max(now)),
                        (s.plan.energy_estimate - (s.launch_charge - u.battery.charge)).max(0.0),
                    ),
                    None => (None, 0.0),
                };
                (
                    u.id.clone(),
                    UavForecastState {
                        charge: u.battery.charge,
                        capacity: u.battery.capacity,
                        returns_at,
                        remaining_draw: remaining,
                    },
                )
            })
            .collect();
        let recharge = self
            .uavs
            .values()
            .next()
            .map(|u| u.config.power.recharge_power)
            .unwrap_or(0.0);
        let input = ForecastInput {
            now,
            usv_charge: self.usv.battery.charge,
            usv_capacity: self.usv.battery.capacity,
            usv_hotel: self.usv.config.hotel_power,
            recharge_power: recharge,
            uavs,
            committed: &[],
            env: &self.config.environment,
        };
        forecast_energy(
            &input,
            self.config.coordinator.forecast_horizon,
            self.config.coordinator.forecast_step,
        )
    }

    fn coordinate(&mut self, now: f64) {
        self.run_forced(now);
        let mugs = self.known_mugs();
        let relay = self.relay_stats();
        let busy: Vec<VehicleId> = self
            .uavs
            .values()
            .filter_map(|u| u.sortie.as_ref().and_then(|s| s.plan.objective.mug().cloned()))
            .collect();
        let relay_active = self
            .uavs
            .values()
            .any(|u| matches!(u.sortie.as_ref().map(|s| &s.plan.objective), Some(Objective::Relay { .. })));
        let uavs: Vec<UavAgent> = self.uavs.values().cloned().collect();
        let outcomes: Vec<PlanOutcome> = {
            let forecast = LazyForecast::new(|| self.forecast(now));
            let view = PlannerView {
                now,
                usv: &self.usv,
                uavs: &uavs,
                mugs: &mugs,
                pending_deploys: &self.pending_deploys,
                relay: &relay,
                busy_mugs: &busy,
                relay_active,
                bandwidth: self.config.comms.bandwidth,
                forecast: &forecast,
                config: &self.config.coordinator,
                next_plan_id: self.next_plan_id,
            };
            self.planner.decide(&view)
        };
        // a deferral stays on record until planned or past its retry time
        let mut still_deferred: BTreeMap<String, (String, f64)> = std::mem::take(&mut self.deferred)
            .into_iter()
            .filter(|(_, (_, retry))| *retry > now)
            .collect();
        for o in outcomes {
            match o.decision {
                Decision::Plan(plan) => {
                    still_deferred.remove(&o.subject);
                    self.launch(plan);
                }
                Decision::Deferred { reason, retry_at } => {
                    let reason = serde_json::to_value(reason)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_owned))
                        .unwrap_or_default();
                    let changed = still_deferred.get(&o.subject).map(|(r, _)| r != &reason).unwrap_or(true);
                    if changed {
                        self.stats.sorties_deferred += 1;
                        self.log(Event::Deferred {
                            subject: o.subject.clone(),
                            reason: reason.clone(),
                            retry_at,
                        });
                    }
                    still_deferred.insert(o.subject, (reason, retry_at));
                }
            }
        }
        self.deferred = still_deferred;
    }

    fn launch(&mut self, plan: SortiePlan) {
        self.next_plan_id = self.next_plan_id.max(plan.id) + 1;
        let uav_id = plan.uav.clone();
        if let Objective::Deploy { mug, .. } = &plan.objective {
            self.usv.mug_bay.remove(mug);
            if let Some(m) = self.mugs.get_mut(mug) {
                m.carried_by = Some(uav_id.clone());
            }
        }
        self.stats.sorties_launched += 1;
        self.log(Event::Plan { plan: plan.clone() });
        let uav = self.uavs.get_mut(&uav_id).expect("planned uav exists");
        let ev = uav.launch(plan);
        let from = UavMode::DockedCharging.as_str().to_owned();
        let to = uav.mode.as_str().to_owned();
        self.log(Event::Uav { uav: uav_id.clone(), detail: ev });
        self.log(Event::Mode {
            vehicle: uav_id.clone(),
            from,
            to,
            cause: "launch".into(),
        });
        // the vessel saw it go
        let u = &self.uavs[&uav_id];
        let entry = KbEntry {
            vehicle: u.id.clone(),
            kind: VehicleKind::Uav,
            mode: u.mode.as_str().into(),
            position: u.position,
            depth: 0.0,
            altitude: u.altitude,
            sigma: 0.0,
            battery_wh: u.battery.charge,
            yo_count: 0,
            task: u.sortie.as_ref().map(|s| s.plan.objective.name().to_owned()),
            sampled_at: self.time,
            reported_at: self.time,
            first_hand: true,
            in_bay: false,
        };
        self.kb.observe(entry);
    }

    fn run_forced(&mut self, now: f64) {
        for i in 0..self.config.forced_sortie.len() {
            if self.forced_done[i] || self.config.forced_sortie[i].at > now + 1e-9 {
                continue;
            }
            self.forced_done[i] = true;
            let fs = self.config.forced_sortie[i].clone();
            let uav = self.uavs[&fs.uav].clone();
            if !uav.is_docked() {
                self.stats.forced_refused += 1;
                self.log(Event::ForcedRefused {
                    uav: fs.uav.clone(),
                    kind: fs.kind,
                    reason: "uav not on the pad".into(),
                });
                continue;
            }
            let reserve = self.config.coordinator.reserve_fraction;
            let id = self.next_plan_id;
            let plan = match fs.kind {
                ForcedKind::Relay => plan_relay(fs.target, fs.duration, &uav, &self.usv, now, reserve, id),
                ForcedKind::Recover => {
                    let mug = fs.mug.clone().expect("validated");
                    let known = KnownMug {
                        id: mug,
                        position: fs.target,
                        sigma: 0.0,
                        mode: "WAIT_RECOVERY".into(),
                        in_bay: false,
                        carried: false,
                        recovery_requested: true,
                        drift: [0.0, 0.0],
                        fix_age: 0.0,
                    };
                    plan_recovery(&known, &uav, &self.usv, now, reserve, id).expect("synthetic target is recoverable")
                }
            };
            if self.planner.admit(&plan, uav.battery.charge) {
                let mut plan = plan;
                plan.guarded = self.planner.name() == "greedy";
                self.launch(plan);
            } else {
                self.stats.forced_refused += 1;
                self.log(Event::ForcedRefused {
                    uav: fs.uav.clone(),
                    kind: fs.kind,
                    reason: format!(
                        "needs {:.1} Wh, holds {:.1} Wh",
                        plan.launch_charge(),
                        uav.battery.charge
                    ),
                });
            }
        }
    }

    fn dispatch_uav_event(&mut self, uav: &VehicleId, e: UavEvent, now: f64) {
        let mut mode_log = Vec::new();
        match &e {
            UavEvent::PickedUp { mug, .. } => {
                self.stats.pickups += 1;
                if let Some(m) = self.mugs.get_mut(mug) {
                    m.carried_by = Some(uav.clone());
                    m.apply(MugEvent::PickedUp, now, &mut mode_log);
                }
                self.kb.recovery_requested.remove(mug);
            }
            UavEvent::PickupFailed { .. } => self.stats.failed_pickups += 1,
            UavEvent::Released { mug, at, .. } => {
                self.stats.deployments += 1;
                self.pending_deploys.retain(|(m, _)| m != mug);
                if let Some(m) = self.mugs.get_mut(mug) {
                    m.deploy(*at, now, &mut mode_log);
                }
            }
            UavEvent::Docked {
                charge,
                reserve,
                carrying,
                ..
            } => {
                self.stats.returns += 1;
                let margin = charge - reserve;
                self.stats.min_return_margin =
                    Some(self.stats.min_return_margin.map_or(margin, |m| m.min(margin)));
                if margin < -1e-9 {
                    self.stats.reserve_violations += 1;
                }
                if let Some(mug) = carrying {
                    self.usv.mug_bay.insert(mug.clone());
                    if let Some(m) = self.mugs.get_mut(mug) {
                        m.carried_by = None;
                        m.kin.position = self.usv.position;
                    }
                }
            }
            UavEvent::EmergencyLand { carrying, at, .. } => {
                self.stats.emergency_lands += 1;
                if let Some(mug) = carrying {
                    if let Some(m) = self.mugs.get_mut(mug) {
                        m.carried_by = None;
                        if m.mode == MugMode::PreDeploy {
                            m.deploy(*at, now, &mut mode_log);
                            self.pending_deploys.retain(|(p, _)| p != mug);
                        } else {
                            m.kin = crate::physics::MugKinematics::at_surface(*at);
                            m.apply(MugEvent::Ditched, now, &mut mode_log);
                        }
                    }
                }
            }
            UavEvent::Launched { .. } | UavEvent::TurnedBack { .. } => {}
        }
        let mug_id = match &e {
            UavEvent::PickedUp { mug, .. } | UavEvent::Released { mug, .. } => Some(mug.clone()),
            UavEvent::EmergencyLand { carrying, .. } => carrying.clone(),
            _ => None,
        };
        self.log(Event::Uav {
            uav: uav.clone(),
            detail: e,
        });
        if let Some(mug) = mug_id {
            for (from, to, cause) in mode_log {
                self.log(Event::Mode {
                    vehicle: mug.clone(),
                    from: mode_name(from),
                    to: mode_name(to),
                    cause: format!("{cause:?}"),
                });
            }
        }
        // carried gliders ride with their UAV
        for m in self.mugs.values_mut() {
            if let Some(u) = m.carried_by.as_ref().and_then(|u| self.uavs.get(u)) {
                m.kin.position = u.position;
            }
        }
    }

    fn check_invariants(&mut self) {
        let mut problems = Vec::new();
        let check_store = |name: &str, s: &crate::powertrain::EnergyStore, out: &mut Vec<String>| {
            if s.charge < -1e-9 || s.charge > s.capacity + 1e-9 {
                out.push(format!("{name} charge {} outside [0, {}]", s.charge, s.capacity));
            }
        };
        check_store(self.usv.id.as_str(), &self.usv.battery, &mut problems);
        for u in self.uavs.values() {
            check_store(u.id.as_str(), &u.battery, &mut problems);
            if u.carrying.is_some()
                && !matches!(u.mode, UavMode::TransitOut | UavMode::HoverDeploy | UavMode::TransitBack)
            {
                problems.push(format!("{} carries a glider while {}", u.id, u.mode));
            }
        }
        for m in self.mugs.values() {
            check_store(m.id.as_str(), &m.battery, &mut problems);
            if m.target_depth > 200.0 {
                problems.push(format!("{} target depth {} above 200 m", m.id, m.target_depth));
            }
            if let Some(u) = &m.carried_by {
                if self.uavs.get(u).and_then(|u| u.carrying.as_ref()) != Some(&m.id) {
                    problems.push(format!("{} carried by {u} which does not hold it", m.id));
                }
            }
        }
        if self.tick.is_multiple_of(self.config.simulation.audit_every) {
            let r = self.energy_residual();
            if r.abs() > 1e-6 * self.audit.scale() {
                problems.push(format!("energy audit residual {r:.3e} Wh"));
            }
        }
        if let Some(p) = problems.into_iter().next() {
            self.fail(p);
        }
    }

    pub fn total_charge(&self) -> f64 {
        self.usv.battery.charge
            + self.uavs.values().map(|u| u.battery.charge).sum::<f64>()
            + self.mugs.values().map(|m| m.battery.charge).sum::<f64>()
    }

    /// (stored change) - (harvest - consumption - curtailed + unserved), Wh.
    pub fn energy_residual(&self) -> f64 {
        self.audit.residual(self.total_charge())
    }

    fn emit_vehicle_rows(&mut self) {
        let t = self.time;
        let mut rows = Vec::new();
        for (id, kind) in &self.order {
            let row = match kind {
                VehicleKind::Mug => {
                    let m = &self.mugs[id];
                    VehicleRow {
                        t,
                        vehicle: id.clone(),
                        kind: *kind,
                        mode: m.mode.as_str().into(),
                        x: m.kin.position[0],
                        y: m.kin.position[1],
                        depth: m.kin.depth,
                        altitude: 0.0,
                        est_x: m.nav.position[0],
                        est_y: m.nav.position[1],
                        sigma: m.nav.sigma,
                        battery_wh: m.battery.charge,
                        yo_count: m.yo_count,
                        queue: self.network.queued(id),
                    }
                }
                VehicleKind::Uav => {
                    let u = &self.uavs[id];
                    VehicleRow {
                        t,
                        vehicle: id.clone(),
                        kind: *kind,
                        mode: u.mode.as_str().into(),
                        x: u.position[0],
                        y: u.position[1],
                        depth: 0.0,
                        altitude: u.altitude,
                        est_x: u.position[0],
                        est_y: u.position[1],
                        sigma: 0.0,
                        battery_wh: u.battery.charge,
                        yo_count: 0,
                        queue: self.network.queued(id),
                    }
                }
                VehicleKind::Usv => {
                    let s = &self.usv;
                    VehicleRow {
                        t,
                        vehicle: id.clone(),
                        kind: *kind,
                        mode: if s.track.is_empty() { "STATION_KEEPING" } else { "TRACK_FOLLOWING" }.into(),
                        x: s.position[0],
                        y: s.position[1],
                        depth: 0.0,
                        altitude: s.config.mast_height,
                        est_x: s.position[0],
                        est_y: s.position[1],
                        sigma: 0.0,
                        battery_wh: s.battery.charge,
                        yo_count: 0,
                        queue: self.network.queued(id),
                    }
                }
            };
            rows.push(row);
        }
        for r in rows {
            self.emit_row(&Row::Vehicle(r.clone()));
            self.tracks.push(r);
        }
    }

    /// Handle an operator command between ticks. Re-submitting a command id
    /// returns the original acknowledgement and has no further effect.
    pub fn submit_command(&mut self, cmd: OperatorCommand) -> CommandAck {
        if let Some(prev) = self.commands.get(&cmd.command_id) {
            return CommandAck {
                duplicate: true,
                ..prev.clone()
            };
        }
        let ack = self.apply_command(&cmd);
        if !cmd.command_id.is_empty() {
            self.commands.insert(cmd.command_id.clone(), ack.clone());
        }
        self.log(Event::Command {
            verb: cmd.verb.name().into(),
            target: cmd.target.clone(),
            ack: ack.clone(),
        });
        ack
    }

    fn apply_command(&mut self, cmd: &OperatorCommand) -> CommandAck {
        let id = cmd.command_id.as_str();
        if id.is_empty() {
            return CommandAck::rejected(id, "command_id must not be empty");
        }
        let target_kind = cmd.target.as_ref().map(|t| {
            if self.mugs.contains_key(t) {
                Some(VehicleKind::Mug)
            } else if self.uavs.contains_key(t) {
                Some(VehicleKind::Uav)
            } else if *t == self.usv.id {
                Some(VehicleKind::Usv)
            } else {
                None
            }
        });
        if let Some(None) = target_kind {
            return CommandAck::rejected(id, format!("unknown vehicle `{}`", cmd.target.as_ref().unwrap()));
        }
        let target_kind = target_kind.flatten();
        let need = |k: VehicleKind| -> Result<VehicleId, CommandAck> {
            match (&cmd.target, target_kind) {
                (Some(t), Some(tk)) if tk == k => Ok(t.clone()),
                (None, _) => Err(CommandAck::rejected(id, format!("{} needs a target", cmd.verb.name()))),
                _ => Err(CommandAck::rejected(
                    id,
                    format!("{} does not apply to that vehicle type", cmd.verb.name()),
                )),
            }
        };
        match &cmd.verb {
            Verb::PauseSim => {
                self.control.paused = true;
                CommandAck::accepted(id)
            }
            Verb::ResumeSim => {
                self.control.paused = false;
                CommandAck::accepted(id)
            }
            Verb::SetSimSpeed { speed } => {
                if !(speed.is_finite() && *speed > 0.0 && *speed <= 10_000.0) {
                    return CommandAck::rejected(id, "speed must lie in (0, 10000]");
                }
                self.control.speed = *speed;
                CommandAck::accepted(id)
            }
            Verb::RetaskUsvTrack { track } => {
                if let Some(t) = &cmd.target {
                    if *t != self.usv.id {
                        return CommandAck::rejected(id, "RETASK_USV_TRACK targets the surface vessel");
                    }
                }
                if track.iter().flatten().any(|v| !v.is_finite()) {
                    return CommandAck::rejected(id, "track coordinates must be finite");
                }
                self.usv.retask(track.clone());
                CommandAck::accepted(id)
            }
            Verb::SetDropPoint { point } => {
                let mug = match need(VehicleKind::Mug) {
                    Ok(m) => m,
                    Err(a) => return a,
                };
                if !self.usv.mug_bay.contains(&mug) {
                    return CommandAck::rejected(id, format!("{mug} is not in the bay"));
                }
                if self.uavs.is_empty() {
                    return CommandAck::rejected(id, "no UAV to deploy with");
                }
                if let Err(e) = crate::coordinator::check_drop_depth(*point, &self.config.coordinator) {
                    return CommandAck::rejected(id, e.to_string());
                }
                self.pending_deploys.retain(|(m, _)| *m != mug);
                self.pending_deploys.push((mug, *point));
                CommandAck::accepted(id)
            }
            Verb::SetTargetDepth { depth } => {
                let mug = match need(VehicleKind::Mug) {
                    Ok(m) => m,
                    Err(a) => return a,
                };
                let crush = self.mugs[&mug].config.crush_depth;
                if !(depth.is_finite() && *depth > 0.0 && *depth <= crush.min(200.0)) {
                    return CommandAck::rejected(
                        id,
                        format!("depth must lie in (0, {}] m", crush.min(200.0)),
                    );
                }
                if let Some(reason) = self.mug_unreachable(&mug) {
                    return CommandAck::rejected(id, reason);
                }
                self.send_to_mug(&mug, id, VehicleCommand::SetTargetDepth { depth: *depth });
                CommandAck::queued(id)
            }
            Verb::RequestRecovery => {
                let mug = match need(VehicleKind::Mug) {
                    Ok(m) => m,
                    Err(a) => return a,
                };
                if let Some(reason) = self.mug_unreachable(&mug) {
                    return CommandAck::rejected(id, reason);
                }
                self.kb.recovery_requested.insert(mug.clone(), self.time);
                self.send_to_mug(&mug, id, VehicleCommand::RequestRecovery);
                CommandAck::accepted(id)
            }
            Verb::AbortSortie => {
                let uav = match need(VehicleKind::Uav) {
                    Ok(u) => u,
                    Err(a) => return a,
                };
                let known = self.kb.local.get(&uav).map(|e| e.mode.clone()).unwrap_or_default();
                if known == UavMode::DockedCharging.as_str() || known == UavMode::EmergencyLand.as_str() {
                    return CommandAck::rejected(id, format!("{uav} is not on a sortie ({known})"));
                }
                let usv = self.usv.id.clone();
                let env = CommandEnvelope {
                    command_id: id.to_owned(),
                    command: VehicleCommand::AbortSortie,
                };
                match self.network.originate(&usv, &uav, Payload::Command(env), self.time) {
                    Ok((_, ev)) => self.handle_comm_events(ev),
                    Err(e) => return CommandAck::rejected(id, e.to_string()),
                }
                CommandAck::queued(id)
            }
        }
    }

    /// Reason a glider cannot take commands, judged from what the vessel knows.
    fn mug_unreachable(&self, mug: &VehicleId) -> Option<String> {
        if self.usv.mug_bay.contains(mug) {
            return Some(format!("{mug} is in the bay"));
        }
        let mode = self.kb.local.get(mug).map(|e| e.mode.as_str()).unwrap_or("");
        match MugMode::parse(mode) {
            Some(MugMode::Recovered | MugMode::FaultLowBattery | MugMode::PreDeploy) => {
                Some(format!("{mug} is {mode}"))
            }
            _ => None,
        }
    }

    /// Acoustic when the glider is submerged within range of the vessel,
    /// radio otherwise.
    fn send_to_mug(&mut self, mug: &VehicleId, command_id: &str, command: VehicleCommand) {
        let envelope = CommandEnvelope {
            command_id: command_id.to_owned(),
            command,
        };
        let usv = self.usv.id.clone();
        let sender = &self.network.nodes[&usv];
        let receiver = &self.network.nodes[mug];
        if receiver.is_submerged() {
            if let Ok(out) = acoustic_command(
                sender,
                receiver,
                Payload::Command(envelope.clone()).wire_size(),
                self.dt(),
                &self.config.comms.acoustic,
            ) {
                if out.delivered {
                    self.acoustic.push(AcousticPending {
                        due_tick: self.tick + out.latency_ticks,
                        mug: mug.clone(),
                        envelope,
                    });
                    return;
                }
            }
        }
        match self.network.originate(&usv, mug, Payload::Command(envelope), self.time) {
            Ok((_, ev)) => self.handle_comm_events(ev),
            Err(e) => self.fail(e.to_string()),
        }
    }

    /// Knowledge-limited operator view.
    pub fn snapshot(&self) -> Snapshot {
        let now = self.time;
        let vehicles = self
            .kb
            .visible
            .values()
            .map(|e| VehicleView {
                staleness: if e.first_hand { 0.0 } else { (now - e.reported_at).max(0.0) },
                entry: e.clone(),
            })
            .collect();
        let plans = self
            .uavs
            .values()
            .filter_map(|u| u.sortie.as_ref().map(|s| s.plan.clone()))
            .collect();
        let deferred = self
            .deferred
            .iter()
            .map(|(s, (r, t))| DeferredView {
                subject: s.clone(),
                reason: r.clone(),
                retry_at: *t,
            })
            .collect();
        let links = self
            .links
            .iter()
            .filter(|l| l.available)
            .map(|l| LinkView {
                a: l.endpoints.0.clone(),
                b: l.endpoints.1.clone(),
                distance: l.distance,
            })
            .collect();
        let truth = self.debug_truth.then(|| self.truth());
        Snapshot {
            schema: SNAPSHOT_SCHEMA.into(),
            version: SNAPSHOT_VERSION,
            clock: self.clock(),
            vehicles,
            usv: UsvView {
                id: self.usv.id.clone(),
                position: self.usv.position,
                track: self.usv.track.clone(),
                battery_wh: self.usv.battery.charge,
                dock: self.usv.dock_occupied.clone(),
                bay: self.usv.mug_bay.iter().cloned().collect(),
            },
            plans,
            deferred,
            links,
            events: Vec::new(),
            truth,
        }
    }

    pub fn clock(&self) -> SimClock {
        SimClock {
            sim_time: self.time,
            tick: self.tick,
            paused: self.control.paused,
            speed: self.control.speed,
            finished: self.finished(),
        }
    }

    /// Ground truth for every vehicle. Debug use only.
    pub fn truth(&self) -> Vec<TruthView> {
        let mut out: Vec<TruthView> = self
            .mugs
            .values()
            .map(|m| TruthView {
                vehicle: m.id.clone(),
                mode: m.mode.as_str().into(),
                position: m.kin.position,
                depth: m.kin.depth,
                altitude: 0.0,
                battery_wh: m.battery.charge,
            })
            .chain(self.uavs.values().map(|u| TruthView {
                vehicle: u.id.clone(),
                mode: u.mode.as_str().into(),
                position: u.position,
                depth: 0.0,
                altitude: u.altitude,
                battery_wh: u.battery.charge,
            }))
            .collect();
        out.push(TruthView {
            vehicle: self.usv.id.clone(),
            mode: "USV".into(),
            position: self.usv.position,
            depth: 0.0,
            altitude: self.usv.config.mast_height,
            battery_wh: self.usv.battery.charge,
        });
        out.sort_by(|a, b| a.vehicle.cmp(&b.vehicle));
        out
    }

    pub fn drain_events(&mut self) -> Vec<EventRecord> {
        std::mem::take(&mut self.events)
    }

    pub fn drain_telemetry(&mut self) -> Vec<String> {
        std::mem::take(&mut self.telemetry)
    }

    /// Which gliders have reached a recovery state, and when.
    pub fn endurance(&self) -> BTreeMap<VehicleId, Option<f64>> {
        self.mugs.iter().map(|(k, m)| (k.clone(), m.endurance())).collect()
    }
}

fn uav_status(u: &UavAgent, now: f64) -> StatusReport {
    StatusReport {
        vehicle: u.id.clone(),
        kind: VehicleKind::Uav,
        mode: u.mode.as_str().into(),
        position: u.position,
        depth: 0.0,
        altitude: u.altitude,
        sigma: 0.0,
        battery_wh: u.battery.charge,
        yo_count: 0,
        task: u.sortie.as_ref().map(|s| s.plan.objective.name().to_owned()),
        sampled_at: now,
    }
}
