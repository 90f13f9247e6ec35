//! Glider mission: repeated descend/ascend profiles with a GPS fix and a
//! telemetry window at every surfacing.

use super::ctd::{CtdProfile, CtdSample};
use super::nav::{dead_reckon_update, gps_fix, NavConfig, NavEstimate};
use crate::comms::{CommandEnvelope, Payload, StatusReport, VehicleCommand};
use crate::ids::{VehicleId, VehicleKind};
use crate::physics::{
    glide_step, net_buoyant_force, trim_hull_volume, vertical_step, Environment, MugBody,
    MugKinematics, PhysicsError, VbsState,
};
use crate::powertrain::{
    battery_step, motor_current, vbs_stroke_energy, BatteryStep, EnergyStore, Medium, MotorModel,
    PowertrainError,
};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MugMode {
    PreDeploy,
    Descend,
    Ascend,
    SurfaceFix,
    Transmit,
    WaitRecovery,
    Recovered,
    FaultLowBattery,
    FaultOverdepth,
}

impl MugMode {
    pub const ALL: [MugMode; 9] = [
        MugMode::PreDeploy,
        MugMode::Descend,
        MugMode::Ascend,
        MugMode::SurfaceFix,
        MugMode::Transmit,
        MugMode::WaitRecovery,
        MugMode::Recovered,
        MugMode::FaultLowBattery,
        MugMode::FaultOverdepth,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MugMode::PreDeploy => "PRE_DEPLOY",
            MugMode::Descend => "DESCEND",
            MugMode::Ascend => "ASCEND",
            MugMode::SurfaceFix => "SURFACE_FIX",
            MugMode::Transmit => "TRANSMIT",
            MugMode::WaitRecovery => "WAIT_RECOVERY",
            MugMode::Recovered => "RECOVERED",
            MugMode::FaultLowBattery => "FAULT_LOW_BATTERY",
            MugMode::FaultOverdepth => "FAULT_OVERDEPTH",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// In the water with the mission running or faulted.
    pub fn in_water(self) -> bool {
        !matches!(self, MugMode::PreDeploy | MugMode::Recovered)
    }

    /// Total transition function of the mission state machine. Pairs that
    /// have no effect map back to the same mode.
    pub fn on(self, event: MugEvent) -> MugMode {
        use MugEvent as E;
        use MugMode as M;
        match (self, event) {
            (M::PreDeploy, E::Deployed) => M::Descend,
            (M::Descend, E::TurnDepthReached) => M::Ascend,
            (M::Ascend, E::Surfaced) => M::SurfaceFix,
            (M::Ascend | M::FaultOverdepth, E::SurfacedForRecovery) => M::WaitRecovery,
            (M::FaultOverdepth, E::Surfaced) => M::WaitRecovery,
            (M::SurfaceFix, E::FixAcquired) => M::Transmit,
            (M::Transmit, E::TransmitComplete) => M::Descend,
            (M::Descend, E::LowBattery | E::RecoveryRequested) => M::Ascend,
            (M::SurfaceFix | M::Transmit, E::LowBattery | E::RecoveryRequested) => {
                M::WaitRecovery
            }
            (M::Descend | M::Ascend, E::OverDepth) => M::FaultOverdepth,
            (
                M::Descend
                | M::Ascend
                | M::SurfaceFix
                | M::Transmit
                | M::WaitRecovery
                | M::FaultOverdepth,
                E::Depleted,
            ) => M::FaultLowBattery,
            (M::WaitRecovery | M::FaultLowBattery, E::PickedUp) => M::Recovered,
            (M::Recovered, E::Ditched) => M::WaitRecovery,
            (m, _) => m,
        }
    }
}

impl fmt::Display for MugMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MugEvent {
    Deployed,
    TurnDepthReached,
    Surfaced,
    SurfacedForRecovery,
    FixAcquired,
    TransmitComplete,
    LowBattery,
    RecoveryRequested,
    OverDepth,
    Depleted,
    PickedUp,
    /// Released back into the water by a carrier that had to land.
    Ditched,
}

impl MugEvent {
    pub const ALL: [MugEvent; 12] = [
        MugEvent::Deployed,
        MugEvent::TurnDepthReached,
        MugEvent::Surfaced,
        MugEvent::SurfacedForRecovery,
        MugEvent::FixAcquired,
        MugEvent::TransmitComplete,
        MugEvent::LowBattery,
        MugEvent::RecoveryRequested,
        MugEvent::OverDepth,
        MugEvent::Depleted,
        MugEvent::PickedUp,
        MugEvent::Ditched,
    ];
}

/// Every mode change the mission state machine may make.
pub const MUG_EDGES: &[(MugMode, MugMode)] = &[
    (MugMode::PreDeploy, MugMode::Descend),
    (MugMode::Descend, MugMode::Ascend),
    (MugMode::Descend, MugMode::FaultOverdepth),
    (MugMode::Descend, MugMode::FaultLowBattery),
    (MugMode::Ascend, MugMode::SurfaceFix),
    (MugMode::Ascend, MugMode::WaitRecovery),
    (MugMode::Ascend, MugMode::FaultOverdepth),
    (MugMode::Ascend, MugMode::FaultLowBattery),
    (MugMode::SurfaceFix, MugMode::Transmit),
    (MugMode::SurfaceFix, MugMode::WaitRecovery),
    (MugMode::SurfaceFix, MugMode::FaultLowBattery),
    (MugMode::Transmit, MugMode::Descend),
    (MugMode::Transmit, MugMode::WaitRecovery),
    (MugMode::Transmit, MugMode::FaultLowBattery),
    (MugMode::WaitRecovery, MugMode::Recovered),
    (MugMode::WaitRecovery, MugMode::FaultLowBattery),
    (MugMode::FaultOverdepth, MugMode::WaitRecovery),
    (MugMode::FaultOverdepth, MugMode::FaultLowBattery),
    (MugMode::FaultLowBattery, MugMode::Recovered),
    (MugMode::Recovered, MugMode::WaitRecovery),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MugConfig {
    pub id: VehicleId,
    /// Starting position in the water, or the bay position when a drop
    /// point is configured.
    pub position: [f64; 2],
    /// When set the glider starts in the surface vessel's bay and is
    /// deployed here by the aerial vehicle.
    pub drop_point: Option<[f64; 2]>,
    pub body: MugBody,
    pub vbs: VbsState,
    pub motor: MotorModel,
    pub battery_capacity: f64,
    pub initial_charge: Option<f64>,
    pub reserve_fraction: f64,
    pub hotel_power: f64,
    pub transmit_power: f64,
    pub target_depth: f64,
    pub crush_depth: f64,
    pub neutral_fraction: f64,
    pub heavy_stop: f64,
    pub light_stop: f64,
    pub glide_ratio: f64,
    pub heading: f64,
    pub pitch: f64,
    pub sample_interval: f64,
    pub ctd_batch: u32,
    pub fix_duration: f64,
    pub transmit_timeout: f64,
    pub recovery_beacon_interval: f64,
    pub antenna_height: f64,
    pub nav: NavConfig,
    pub ctd: CtdProfile,
}

impl Default for MugConfig {
    fn default() -> Self {
        Self {
            id: VehicleId::new("mug-1"),
            position: [0.0, 0.0],
            drop_point: None,
            body: MugBody::default(),
            vbs: VbsState::default(),
            motor: MotorModel::default(),
            battery_capacity: 25.2 * 3.5,
            initial_charge: None,
            reserve_fraction: 0.2,
            hotel_power: 0.5,
            transmit_power: 0.15,
            target_depth: 200.0,
            crush_depth: 200.0,
            neutral_fraction: 0.5,
            heavy_stop: 0.0,
            light_stop: 1.0,
            glide_ratio: 0.0,
            heading: 0.0,
            pitch: 0.0,
            sample_interval: 10.0,
            ctd_batch: 15,
            fix_duration: 30.0,
            transmit_timeout: 300.0,
            recovery_beacon_interval: 600.0,
            antenna_height: 0.1,
            nav: NavConfig::default(),
            ctd: CtdProfile::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MugAgent {
    pub id: VehicleId,
    pub config: MugConfig,
    pub kin: MugKinematics,
    pub vbs: VbsState,
    pub battery: EnergyStore,
    pub mode: MugMode,
    pub nav: NavEstimate,
    pub yo_count: u32,
    pub target_depth: f64,
    pub samples: Vec<CtdSample>,
    pub mode_elapsed: f64,
    pub since_sample: f64,
    pub unbatched: u32,
    pub batch_start: f64,
    pub recovery_pending: bool,
    pub dove: bool,
    pub max_depth: f64,
    pub deployed_at: Option<f64>,
    /// First time the glider entered WAIT_RECOVERY or FAULT_LOW_BATTERY.
    pub recovery_state_at: Option<f64>,
    pub pending_commands: Vec<CommandEnvelope>,
    pub applied_commands: Vec<(String, f64)>,
    pub carried_by: Option<VehicleId>,
}

/// Energy drawn in one tick by category, Wh.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MugEnergy {
    pub hotel: f64,
    pub vbs: f64,
    pub transmit: f64,
}

impl MugEnergy {
    pub fn total(&self) -> f64 {
        self.hotel + self.vbs + self.transmit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MugTick {
    pub telemetry: Vec<Payload>,
    pub transitions: Vec<(MugMode, MugMode, MugEvent)>,
    pub energy: MugEnergy,
    pub battery: BatteryStep,
}

pub struct MugContext<'a> {
    pub now: f64,
    pub dt: f64,
    pub env: &'a Environment,
    /// Messages waiting in the glider's radio queue.
    pub queue_len: usize,
}

impl MugAgent {
    pub fn new(config: MugConfig, env: &Environment) -> Self {
        let mut body = config.body;
        body.hull_volume = trim_hull_volume(&body, env);
        let mut config = config;
        config.body = body;
        let capacity = config.battery_capacity;
        let charge = config.initial_charge.unwrap_or(capacity);
        let battery = EnergyStore::new(capacity, charge, 25.2, config.reserve_fraction * capacity);
        let mode = if config.drop_point.is_some() {
            MugMode::PreDeploy
        } else {
            MugMode::Descend
        };
        let vbs = VbsState {
            piston_fraction: config.light_stop,
            ..config.vbs
        };
        Self {
            id: config.id.clone(),
            kin: MugKinematics::at_surface(config.position),
            vbs,
            battery,
            mode,
            nav: NavEstimate {
                position: config.position,
                sigma: config.nav.gps_noise,
            },
            yo_count: 0,
            target_depth: config.target_depth,
            samples: Vec::new(),
            mode_elapsed: 0.0,
            since_sample: 0.0,
            unbatched: 0,
            batch_start: 0.0,
            recovery_pending: false,
            dove: false,
            max_depth: 0.0,
            deployed_at: if mode == MugMode::Descend { Some(0.0) } else { None },
            recovery_state_at: None,
            pending_commands: Vec::new(),
            applied_commands: Vec::new(),
            carried_by: None,
            config,
        }
    }

    pub fn body(&self) -> &MugBody {
        &self.config.body
    }

    /// Radio antenna height above the surface (negative = depth).
    pub fn antenna_z(&self) -> f64 {
        if self.kin.depth > 0.0 {
            -self.kin.depth
        } else {
            self.config.antenna_height
        }
    }

    pub fn radio_powered(&self) -> bool {
        self.mode.in_water() && self.mode != MugMode::FaultLowBattery
    }

    pub fn net_force(&self, env: &Environment) -> f64 {
        net_buoyant_force(&self.vbs, self.body(), env, self.config.neutral_fraction)
    }

    /// Apply a mode event, recording the transition if the mode changes.
    pub fn apply(
        &mut self,
        event: MugEvent,
        now: f64,
        log: &mut Vec<(MugMode, MugMode, MugEvent)>,
    ) {
        let next = self.mode.on(event);
        if next == self.mode {
            return;
        }
        debug_assert!(MUG_EDGES.contains(&(self.mode, next)));
        log.push((self.mode, next, event));
        self.mode = next;
        self.mode_elapsed = 0.0;
        if matches!(next, MugMode::WaitRecovery | MugMode::FaultLowBattery)
            && self.recovery_state_at.is_none()
        {
            self.recovery_state_at = Some(now);
        }
        if next == MugMode::WaitRecovery {
            // a beacon goes out on the first recovery tick
            self.since_sample = 0.0;
        }
    }

    pub fn deploy(&mut self, at: [f64; 2], now: f64, log: &mut Vec<(MugMode, MugMode, MugEvent)>) {
        self.kin = MugKinematics::at_surface(at);
        self.nav = NavEstimate {
            position: at,
            sigma: self.config.nav.gps_noise,
        };
        self.carried_by = None;
        self.deployed_at = Some(now);
        self.apply(MugEvent::Deployed, now, log);
    }

    pub fn status(&self, now: f64) -> StatusReport {
        StatusReport {
            vehicle: self.id.clone(),
            kind: VehicleKind::Mug,
            mode: self.mode.as_str().to_owned(),
            position: self.nav.position,
            depth: self.kin.depth,
            altitude: 0.0,
            sigma: self.nav.sigma,
            battery_wh: self.battery.charge,
            yo_count: self.yo_count,
            task: Some(format!("profile to {:.0} m", self.target_depth)),
            sampled_at: now,
        }
    }

    pub fn endurance(&self) -> Option<f64> {
        match (self.deployed_at, self.recovery_state_at) {
            (Some(d), Some(r)) => Some(r - d),
            _ => None,
        }
    }
}

/// Move the piston toward `target` for one step. Returns the new state and
/// the electrical energy used (Wh).
pub fn drive_piston(
    vbs: &VbsState,
    target: f64,
    depth: f64,
    motor: &MotorModel,
    env: &Environment,
    dt: f64,
) -> Result<(VbsState, f64), PowertrainError> {
    let remaining = target - vbs.piston_fraction;
    if remaining.abs() < 1e-12 {
        return Ok((
            VbsState {
                piston_rate: 0.0,
                ..*vbs
            },
            0.0,
        ));
    }
    let load = if remaining > 0.0 {
        crate::powertrain::extension_load(depth, vbs, env)?
    } else {
        0.0
    };
    let draw = motor_current(load, motor.max_piston_speed, Medium::Oil, motor);
    if draw.achieved_speed <= 0.0 {
        // stalled: the drive sits at its limit without moving
        let wh = motor.no_load_current * motor.bus_voltage_nominal * dt / 3600.0;
        return Ok((
            VbsState {
                piston_rate: 0.0,
                ..*vbs
            },
            wh,
        ));
    }
    let max_step = draw.achieved_speed * dt / vbs.stroke_length;
    let delta = remaining.clamp(-max_step, max_step);
    let energy = vbs_stroke_energy(depth, delta, motor, vbs, env)?;
    Ok((
        VbsState {
            piston_fraction: (vbs.piston_fraction + delta).clamp(0.0, 1.0),
            piston_rate: delta / dt,
            ..*vbs
        },
        energy.wh,
    ))
}

fn physics_step(
    kin: &MugKinematics,
    vbs: &VbsState,
    cfg: &MugConfig,
    env: &Environment,
    dt: f64,
) -> Result<MugKinematics, PhysicsError> {
    let force = net_buoyant_force(vbs, &cfg.body, env, cfg.neutral_fraction);
    let k = vertical_step(kin, force, &cfg.body, env, dt)?;
    glide_step(&k, cfg.pitch, cfg.glide_ratio, cfg.heading, env, dt)
}

/// Deepest point reached if the glider keeps descending for one more step
/// and then commands the light stop.
pub fn predict_apex(
    kin: &MugKinematics,
    vbs: &VbsState,
    cfg: &MugConfig,
    env: &Environment,
    dt: f64,
) -> f64 {
    let step = |k: &MugKinematics, v: &VbsState, target: f64| {
        let (v2, _) = drive_piston(v, target, k.depth, &cfg.motor, env, dt).unwrap_or((*v, 0.0));
        let k2 = vertical_step(
            k,
            net_buoyant_force(&v2, &cfg.body, env, cfg.neutral_fraction),
            &cfg.body,
            env,
            dt,
        )
        .unwrap_or(*k);
        (k2, v2)
    };
    let (mut k, mut v) = step(kin, vbs, cfg.heavy_stop);
    let mut apex = k.depth;
    for _ in 0..100_000 {
        let (k2, v2) = step(&k, &v, cfg.light_stop);
        k = k2;
        v = v2;
        apex = apex.max(k.depth);
        if k.vertical_velocity <= 0.0 || k.depth <= 0.0 {
            break;
        }
    }
    apex
}

/// One mission tick.
pub fn mug_tick(
    agent: &mut MugAgent,
    ctx: &MugContext<'_>,
    rng: &mut dyn RngCore,
) -> Result<MugTick, PowertrainError> {
    let dt = ctx.dt;
    let env = ctx.env;
    let now = ctx.now;
    let mut out = MugTick {
        telemetry: Vec::new(),
        transitions: Vec::new(),
        energy: MugEnergy::default(),
        battery: BatteryStep::default(),
    };
    if !agent.mode.in_water() {
        return Ok(out);
    }
    agent.mode_elapsed += dt;
    apply_commands(agent, now, &mut out);

    let alive = agent.mode != MugMode::FaultLowBattery;
    let target = match agent.mode {
        MugMode::Descend => agent.config.heavy_stop,
        MugMode::Ascend | MugMode::FaultOverdepth => agent.config.light_stop,
        _ => agent.vbs.piston_fraction,
    };
    if alive {
        let (vbs, wh) = drive_piston(&agent.vbs, target, agent.kin.depth, &agent.config.motor, env, dt)?;
        agent.vbs = vbs;
        out.energy.vbs = wh;
    }

    let was_submerged = agent.kin.is_submerged();
    agent.kin = physics_step(&agent.kin, &agent.vbs, &agent.config, env, dt)?;
    let submerged = agent.kin.is_submerged();
    if submerged {
        agent.dove = true;
        agent.max_depth = agent.max_depth.max(agent.kin.depth);
        agent.nav = dead_reckon_update(&agent.nav, dt, &agent.config.nav);
        agent.since_sample += dt;
        if agent.since_sample + 1e-9 >= agent.config.sample_interval {
            agent.since_sample = 0.0;
            if agent.unbatched == 0 {
                agent.batch_start = now;
            }
            agent.samples.push(CtdSample {
                time: now,
                depth: agent.kin.depth,
                conductivity: agent.config.ctd.conductivity_at(agent.kin.depth),
                temperature: agent.config.ctd.temperature_at(agent.kin.depth),
                position_estimate: agent.nav.position,
            });
            agent.unbatched += 1;
            if agent.unbatched >= agent.config.ctd_batch {
                out.telemetry.push(flush_batch(agent, now));
            }
        }
    } else if was_submerged {
        agent.since_sample = 0.0;
    }

    let log = &mut out.transitions;
    match agent.mode {
        MugMode::Descend => {
            if agent.kin.depth > agent.config.crush_depth {
                agent.apply(MugEvent::OverDepth, now, log);
            } else if submerged
                && agent.kin.vertical_velocity > 0.0
                && agent.kin.depth >= 0.5 * agent.target_depth
                && predict_apex(&agent.kin, &agent.vbs, &agent.config, env, dt) > agent.target_depth
            {
                agent.apply(MugEvent::TurnDepthReached, now, log);
            }
        }
        MugMode::Ascend => {
            if agent.kin.depth > agent.config.crush_depth {
                agent.apply(MugEvent::OverDepth, now, log);
            } else if !submerged {
                if agent.dove {
                    agent.yo_count += 1;
                }
                agent.dove = false;
                if agent.recovery_pending {
                    agent.apply(MugEvent::SurfacedForRecovery, now, log);
                } else {
                    agent.apply(MugEvent::Surfaced, now, log);
                }
            }
        }
        MugMode::FaultOverdepth => {
            if !submerged {
                agent.dove = false;
                agent.apply(MugEvent::SurfacedForRecovery, now, log);
            }
        }
        MugMode::SurfaceFix => {
            if agent.mode_elapsed + 1e-9 >= agent.config.fix_duration {
                agent.nav = gps_fix(agent.kin.position, &agent.config.nav, rng);
                if agent.unbatched > 0 {
                    out.telemetry.push(flush_batch(agent, now));
                }
                out.telemetry.push(Payload::Status(agent.status(now)));
                agent.apply(MugEvent::FixAcquired, now, log);
            }
        }
        MugMode::Transmit => {
            let flushed = ctx.queue_len == 0;
            if flushed || agent.mode_elapsed + 1e-9 >= agent.config.transmit_timeout {
                agent.apply(MugEvent::TransmitComplete, now, log);
            }
        }
        MugMode::WaitRecovery => {
            if !submerged {
                agent.since_sample -= dt;
                if agent.since_sample <= 0.0 {
                    agent.since_sample = agent.config.recovery_beacon_interval;
                    agent.nav = gps_fix(agent.kin.position, &agent.config.nav, rng);
                    out.telemetry.push(Payload::Status(agent.status(now)));
                }
            }
        }
        MugMode::PreDeploy | MugMode::Recovered | MugMode::FaultLowBattery => {}
    }

    if alive {
        out.energy.hotel = agent.config.hotel_power * dt / 3600.0;
        if agent.mode == MugMode::Transmit {
            out.energy.transmit = agent.config.transmit_power * dt / 3600.0;
        }
        let power = out.energy.total() * 3600.0 / dt;
        out.battery = battery_step(&mut agent.battery, power, dt);
        let log = &mut out.transitions;
        if out.battery.depleted {
            agent.apply(MugEvent::Depleted, now, log);
        } else if out.battery.low && !agent.recovery_pending {
            agent.recovery_pending = true;
            agent.apply(MugEvent::LowBattery, now, log);
        }
    }
    Ok(out)
}

fn flush_batch(agent: &mut MugAgent, now: f64) -> Payload {
    let p = Payload::CtdBatch {
        samples: agent.unbatched,
        first: agent.batch_start,
        last: now,
    };
    agent.unbatched = 0;
    p
}

fn apply_commands(agent: &mut MugAgent, now: f64, out: &mut MugTick) {
    let surfaced = !agent.kin.is_submerged()
        && matches!(
            agent.mode,
            MugMode::SurfaceFix | MugMode::Transmit | MugMode::WaitRecovery
        );
    let mut keep = Vec::new();
    for cmd in std::mem::take(&mut agent.pending_commands) {
        match &cmd.command {
            VehicleCommand::RequestRecovery => {
                agent.recovery_pending = true;
                agent.apply(MugEvent::RecoveryRequested, now, &mut out.transitions);
                agent.applied_commands.push((cmd.command_id.clone(), now));
            }
            VehicleCommand::SetTargetDepth { depth } if surfaced => {
                agent.target_depth = depth.min(agent.config.crush_depth);
                agent.applied_commands.push((cmd.command_id.clone(), now));
            }
            VehicleCommand::SetTargetDepth { .. } => keep.push(cmd),
            VehicleCommand::AbortSortie => {}
        }
    }
    agent.pending_commands = keep;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run_until(
        agent: &mut MugAgent,
        env: &Environment,
        max_ticks: usize,
        mut stop: impl FnMut(&MugAgent) -> bool,
    ) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = 0.0;
        for _ in 0..max_ticks {
            let ctx = MugContext {
                now: t,
                dt: 1.0,
                env,
                queue_len: 0,
            };
            mug_tick(agent, &ctx, &mut rng).unwrap();
            t += 1.0;
            if stop(agent) {
                break;
            }
        }
        t
    }

    #[test]
    fn transition_table_matches_edge_list() {
        for m in MugMode::ALL {
            for e in MugEvent::ALL {
                let n = m.on(e);
                assert!(n == m || MUG_EDGES.contains(&(m, n)), "{m:?} --{e:?}--> {n:?}");
            }
        }
        for (from, to) in MUG_EDGES {
            assert!(MugEvent::ALL.iter().any(|e| from.on(*e) == *to));
        }
    }

    #[test]
    fn one_profile_reaches_target_without_overdepth() {
        let env = Environment::default();
        let mut agent = MugAgent::new(MugConfig::default(), &env);
        let mut deepest = 0.0f64;
        run_until(&mut agent, &env, 20_000, |a| {
            deepest = deepest.max(a.kin.depth);
            a.mode == MugMode::SurfaceFix
        });
        assert_eq!(agent.mode, MugMode::SurfaceFix);
        assert_eq!(agent.yo_count, 1);
        assert!(deepest <= 200.0, "{deepest}");
        assert!(deepest > 190.0, "{deepest}");
        assert!(!agent.samples.is_empty());
    }

    #[test]
    fn low_battery_at_depth_surfaces_for_recovery() {
        let env = Environment::default();
        let mut agent = MugAgent::new(MugConfig::default(), &env);
        run_until(&mut agent, &env, 20_000, |a| a.kin.depth >= 60.0);
        assert_eq!(agent.mode, MugMode::Descend);
        agent.battery.charge = agent.battery.reserve_floor;
        agent.battery.initial_charge = agent.battery.charge + agent.battery.cumulative_out
            - agent.battery.cumulative_in;
        let mut seen_ascend = false;
        run_until(&mut agent, &env, 5_000, |a| {
            seen_ascend |= a.mode == MugMode::Ascend;
            a.mode == MugMode::WaitRecovery
        });
        assert!(seen_ascend);
        assert_eq!(agent.mode, MugMode::WaitRecovery);
        assert_eq!(agent.kin.depth, 0.0);
    }

    #[test]
    fn wait_recovery_never_actuates() {
        let env = Environment::default();
        let mut agent = MugAgent::new(MugConfig::default(), &env);
        agent.mode = MugMode::WaitRecovery;
        let piston = agent.vbs.piston_fraction;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..1000 {
            let ctx = MugContext { now: i as f64, dt: 1.0, env: &env, queue_len: 0 };
            let t = mug_tick(&mut agent, &ctx, &mut rng).unwrap();
            assert_eq!(t.energy.vbs, 0.0);
        }
        assert_eq!(agent.vbs.piston_fraction, piston);
        assert_eq!(agent.kin.depth, 0.0);
    }

    #[test]
    fn shallow_crush_limit_faults() {
        let env = Environment::default();
        let cfg = MugConfig {
            crush_depth: 100.0,
            ..MugConfig::default()
        };
        let mut agent = MugAgent::new(cfg, &env);
        agent.target_depth = 200.0;
        run_until(&mut agent, &env, 20_000, |a| a.mode == MugMode::FaultOverdepth);
        assert_eq!(agent.mode, MugMode::FaultOverdepth);
        run_until(&mut agent, &env, 20_000, |a| a.mode == MugMode::WaitRecovery);
        assert_eq!(agent.mode, MugMode::WaitRecovery);
    }

    #[test]
    fn two_hours_submerged_grows_sigma() {
        // a very slow profile keeps the glider down for hours
        let env = Environment::default();
        let cfg = MugConfig {
            heavy_stop: 0.495,
            light_stop: 0.505,
            ..MugConfig::default()
        };
        let mut agent = MugAgent::new(cfg, &env);
        let mut submerged_for = 0.0;
        run_until(&mut agent, &env, 7200 + 200, |a| {
            if a.kin.is_submerged() {
                submerged_for += 1.0;
            }
            submerged_for >= 7200.0
        });
        assert!(agent.kin.is_submerged());
        assert!((agent.nav.sigma - 105.0).abs() < 1e-6, "{}", agent.nav.sigma);
        run_until(&mut agent, &env, 20_000, |a| a.mode == MugMode::Transmit);
        assert_eq!(agent.nav.sigma, 5.0);
    }

    #[test]
    fn target_depth_command_waits_for_surface() {
        let env = Environment::default();
        let mut agent = MugAgent::new(MugConfig::default(), &env);
        run_until(&mut agent, &env, 100, |a| a.kin.depth > 5.0);
        agent.pending_commands.push(CommandEnvelope {
            command_id: "c1".into(),
            command: VehicleCommand::SetTargetDepth { depth: 150.0 },
        });
        run_until(&mut agent, &env, 20_000, |a| a.mode == MugMode::SurfaceFix);
        assert_eq!(agent.target_depth, 200.0);
        run_until(&mut agent, &env, 100, |a| a.mode == MugMode::Descend);
        assert_eq!(agent.target_depth, 150.0);
        let mut deepest = 0.0f64;
        run_until(&mut agent, &env, 20_000, |a| {
            deepest = deepest.max(a.kin.depth);
            a.mode == MugMode::SurfaceFix
        });
        assert!(deepest <= 150.0 && deepest > 140.0, "{deepest}");
    }
}
