//! Multirotor sortie cycle: dock, transit, pickup or deploy, relay loiter.

use crate::coordinator::{Objective, SortiePlan};
use crate::ids::VehicleId;
use crate::powertrain::{battery_step, EnergyStore, UavPowerModel};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UavMode {
    DockedCharging,
    TransitOut,
    HoverPickup,
    HoverDeploy,
    TransitBack,
    RelayLoiter,
    EmergencyLand,
}

impl UavMode {
    pub fn as_str(self) -> &'static str {
        match self {
            UavMode::DockedCharging => "DOCKED_CHARGING",
            UavMode::TransitOut => "TRANSIT_OUT",
            UavMode::HoverPickup => "HOVER_PICKUP",
            UavMode::HoverDeploy => "HOVER_DEPLOY",
            UavMode::TransitBack => "TRANSIT_BACK",
            UavMode::RelayLoiter => "RELAY_LOITER",
            UavMode::EmergencyLand => "EMERGENCY_LAND",
        }
    }

    pub fn airborne(self) -> bool {
        !matches!(self, UavMode::DockedCharging | UavMode::EmergencyLand)
    }
}

impl fmt::Display for UavMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UavConfig {
    pub id: VehicleId,
    pub power: UavPowerModel,
    pub initial_charge: Option<f64>,
    pub cruise_altitude: f64,
    pub relay_altitude: f64,
    pub deck_height: f64,
    pub capture_radius: f64,
    /// Range at which a surfaced glider is seen and homed on.
    pub detection_radius: f64,
    pub pickup_time: f64,
    pub deploy_time: f64,
    /// Charge below which an airborne UAV lands wherever it is, Wh.
    pub emergency_floor: f64,
    /// Multiplier on the estimated return energy in the turn-back rule.
    pub return_margin: f64,
    pub status_interval: f64,
}

impl Default for UavConfig {
    fn default() -> Self {
        Self {
            id: VehicleId::new("uav-1"),
            power: UavPowerModel::default(),
            initial_charge: None,
            cruise_altitude: 50.0,
            relay_altitude: 50.0,
            deck_height: 2.0,
            capture_radius: 20.0,
            detection_radius: 100.0,
            pickup_time: 60.0,
            deploy_time: 60.0,
            emergency_floor: 3.0,
            return_margin: 1.0,
            status_interval: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSortie {
    pub plan: SortiePlan,
    pub launch_charge: f64,
    /// Expanding-square search state around the target estimate.
    pub search_leg: u32,
    pub search_step: f64,
    pub hover_elapsed: f64,
    pub loiter_until: f64,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavAgent {
    pub id: VehicleId,
    pub config: UavConfig,
    pub position: [f64; 2],
    pub altitude: f64,
    pub mode: UavMode,
    pub battery: EnergyStore,
    pub carrying: Option<VehicleId>,
    pub sortie: Option<ActiveSortie>,
    pub sorties_flown: u32,
    pub since_status: f64,
    /// Engine tick length, s.
    #[serde(default = "one_second")]
    pub step: f64,
}

fn one_second() -> f64 {
    1.0
}

/// Ground truth the UAV can sense about its sortie target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetView {
    pub position: [f64; 2],
    /// Surfaced and waiting for pickup.
    pub recoverable: bool,
}

pub struct UavContext {
    pub now: f64,
    pub dt: f64,
    pub home: [f64; 2],
    pub home_speed: f64,
    pub target: Option<TargetView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UavEvent {
    Launched { sortie: u64 },
    PickedUp { sortie: u64, mug: VehicleId },
    PickupFailed { sortie: u64, mug: VehicleId },
    Released { sortie: u64, mug: VehicleId, at: [f64; 2] },
    TurnedBack { sortie: u64, charge: f64 },
    Docked { sortie: u64, charge: f64, reserve: f64, carrying: Option<VehicleId> },
    EmergencyLand { sortie: Option<u64>, charge: f64, at: [f64; 2], carrying: Option<VehicleId> },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UavTick {
    pub events: Vec<UavEvent>,
    pub consumed: f64,
    pub unserved: f64,
    pub emit_status: bool,
}

impl UavAgent {
    pub fn new(config: UavConfig, home: [f64; 2]) -> Self {
        let cap = config.power.battery_capacity;
        let charge = config.initial_charge.unwrap_or(cap).clamp(0.0, cap);
        Self {
            id: config.id.clone(),
            position: home,
            altitude: config.deck_height,
            mode: UavMode::DockedCharging,
            battery: EnergyStore::new(cap, charge, 22.2, 0.0),
            carrying: None,
            sortie: None,
            sorties_flown: 0,
            since_status: 0.0,
            step: 1.0,
            config,
        }
    }

    pub fn is_docked(&self) -> bool {
        self.mode == UavMode::DockedCharging
    }

    /// Start a planned sortie from the dock. Deploy sorties leave with the
    /// glider already on board.
    pub fn launch(&mut self, plan: SortiePlan) -> UavEvent {
        debug_assert!(self.is_docked());
        if let Objective::Deploy { mug, .. } = &plan.objective {
            self.carrying = Some(mug.clone());
        }
        let id = plan.id;
        self.sortie = Some(ActiveSortie {
            launch_charge: self.battery.charge,
            search_leg: 0,
            search_step: 0.0,
            hover_elapsed: 0.0,
            loiter_until: 0.0,
            aborted: false,
            plan,
        });
        self.mode = UavMode::TransitOut;
        self.altitude = self.config.cruise_altitude;
        self.sorties_flown += 1;
        UavEvent::Launched { sortie: id }
    }

    /// Cut the sortie short and fly home.
    pub fn abort(&mut self) -> bool {
        match (&mut self.sortie, self.mode) {
            (Some(s), m) if m.airborne() && m != UavMode::TransitBack => {
                s.aborted = true;
                self.mode = UavMode::TransitBack;
                self.altitude = self.config.cruise_altitude;
                true
            }
            _ => false,
        }
    }

    /// Energy to fly home from here at the given closing speed, Wh.
    /// Energy to finish a deploy still carrying its glider: the rest of the
    /// outbound leg and release hover loaded, then home empty.
    pub fn deploy_completion(&self, home: [f64; 2], home_speed: f64) -> Option<f64> {
        let s = self.sortie.as_ref()?;
        let Objective::Deploy { drop_point, .. } = s.plan.objective else {
            return None;
        };
        self.carrying.as_ref()?;
        let p = &self.config.power;
        let loaded = p.multiplier(true);
        let (out, hover) = match self.mode {
            UavMode::TransitOut => (dist(self.position, drop_point), self.config.deploy_time),
            UavMode::HoverDeploy => (0.0, (self.config.deploy_time - s.hover_elapsed).max(0.0)),
            _ => return None,
        };
        let closing = (p.cruise_speed - home_speed).max(0.1 * p.cruise_speed);
        let back = dist(drop_point, home) + out * home_speed / p.cruise_speed;
        Some(
            (p.cruise_power * loaded * out / p.cruise_speed
                + p.hover_power * loaded * hover
                + p.cruise_power * back / closing)
                / 3600.0,
        )
    }

    /// Two ticks at the heaviest loaded draw.
    pub fn tick_cushion(&self) -> f64 {
        let p = &self.config.power;
        2.0 * self.step * p.hover_power.max(p.cruise_power) * p.multiplier(true) / 3600.0
    }

    pub fn return_energy(&self, home: [f64; 2], home_speed: f64) -> f64 {
        let p = &self.config.power;
        let closing = (p.cruise_speed - home_speed).max(0.1 * p.cruise_speed);
        let d = dist(self.position, home);
        p.cruise_power * p.multiplier(self.carrying.is_some()) * (d / closing) / 3600.0
    }
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Move toward `to` by at most `step`; returns true on arrival.
fn fly_toward(pos: &mut [f64; 2], to: [f64; 2], step: f64) -> bool {
    let d = dist(*pos, to);
    if d <= step {
        *pos = to;
        true
    } else {
        pos[0] += (to[0] - pos[0]) * step / d;
        pos[1] += (to[1] - pos[1]) * step / d;
        false
    }
}

/// Corner `n` of an expanding-square search centred on `center`: legs of
/// length L, L, 2L, 2L, 3L, ... heading east, north, west, south.
pub fn square_corner(center: [f64; 2], leg: f64, n: u32) -> [f64; 2] {
    let dirs = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    let mut p = center;
    for i in 0..n {
        let len = leg * f64::from(i / 2 + 1);
        let d = dirs[(i % 4) as usize];
        p = [p[0] + d[0] * len, p[1] + d[1] * len];
    }
    p
}

/// Search leg spacing for a target with radial uncertainty `sigma`.
pub fn search_leg(sigma: f64, capture: f64, detection: f64) -> f64 {
    (2.0 * sigma).min(2.0 * detection).max(capture)
}

pub fn uav_tick(agent: &mut UavAgent, ctx: &UavContext) -> UavTick {
    let mut out = UavTick::default();
    let dt = ctx.dt;
    if agent.mode == UavMode::EmergencyLand {
        return out;
    }
    if agent.mode == UavMode::DockedCharging {
        agent.position = ctx.home;
        agent.altitude = agent.config.deck_height;
        agent.since_status = 0.0;
        return out;
    }
    agent.since_status += dt;
    if agent.since_status + 1e-9 >= agent.config.status_interval {
        agent.since_status = 0.0;
        out.emit_status = true;
    }
    let p = agent.config.power;
    let step = p.cruise_speed * dt;
    let mut moving = true;
    let sortie_id = agent.sortie.as_ref().map(|s| s.plan.id).unwrap_or(0);
    // load state at the start of the tick sets the power multiplier
    let carrying = agent.carrying.is_some();

    // turn-back rule, evaluated before committing another tick away from home
    let reserve = agent
        .sortie
        .as_ref()
        .map(|s| s.plan.protected_reserve())
        .unwrap_or(0.0);
    let guarded = agent.sortie.as_ref().is_none_or(|s| s.plan.guarded);
    if guarded && agent.mode != UavMode::TransitBack {
        // during a pickup the flight home is priced loaded, plus the rest of the hover
        let pickup = agent.mode == UavMode::HoverPickup;
        let loaded = carrying || pickup;
        let worst_power = p.hover_power.max(p.cruise_power) * p.multiplier(loaded);
        let mut ret = agent.return_energy(ctx.home, ctx.home_speed);
        let mut hover_left = 0.0;
        if pickup && !carrying {
            ret *= p.multiplier(true);
            let elapsed = agent.sortie.as_ref().map_or(0.0, |s| s.hover_elapsed);
            hover_left = p.hover_power * (agent.config.pickup_time - elapsed).max(0.0) / 3600.0;
        }
        // this tick plus the partial tick on arrival
        let tick = 2.0 * worst_power * dt / 3600.0;
        let need = agent.config.return_margin * ret + hover_left + tick;
        // a deploy is judged on finishing the drop and flying home empty,
        // which is how it was planned; aborting only helps if that is cheaper
        let finish = agent.deploy_completion(ctx.home, ctx.home_speed);
        let press_on = finish.is_some_and(|f| {
            let f_need = agent.config.return_margin * f + tick;
            agent.battery.charge - f_need > reserve || f <= ret
        });
        if !press_on && agent.battery.charge - need <= reserve {
            agent.mode = UavMode::TransitBack;
            agent.altitude = agent.config.cruise_altitude;
            out.events.push(UavEvent::TurnedBack {
                sortie: sortie_id,
                charge: agent.battery.charge,
            });
        }
    }

    match agent.mode {
        UavMode::TransitOut => {
            let plan = &agent.sortie.as_ref().expect("sortie in flight").plan;
            let target = plan.target();
            if fly_toward(&mut agent.position, target, step) {
                agent.mode = match plan.objective {
                    Objective::Recover { .. } => UavMode::HoverPickup,
                    Objective::Deploy { .. } => UavMode::HoverDeploy,
                    Objective::Relay { duration, .. } => {
                        agent.altitude = agent.config.relay_altitude;
                        if let Some(s) = agent.sortie.as_mut() {
                            s.loiter_until = ctx.now + dt + duration;
                        }
                        UavMode::RelayLoiter
                    }
                };
            }
        }
        UavMode::HoverPickup => {
            let s = agent.sortie.as_mut().expect("sortie in flight");
            let mug = s.plan.objective.mug().cloned().expect("recover sortie");
            match ctx.target {
                Some(t) if t.recoverable => {
                    let d = dist(agent.position, t.position);
                    if d <= agent.config.capture_radius {
                        // station-keep over the drifting glider
                        moving = false;
                        agent.position = t.position;
                        s.hover_elapsed += dt;
                        if s.hover_elapsed + 1e-9 >= agent.config.pickup_time {
                            agent.carrying = Some(mug.clone());
                            agent.mode = UavMode::TransitBack;
                            out.events.push(UavEvent::PickedUp { sortie: sortie_id, mug });
                        }
                    } else if d <= agent.config.detection_radius {
                        s.hover_elapsed = 0.0;
                        fly_toward(&mut agent.position, t.position, step);
                    } else {
                        s.hover_elapsed = 0.0;
                        let leg = search_leg(
                            s.plan.search_sigma,
                            agent.config.capture_radius,
                            agent.config.detection_radius,
                        );
                        let center = s.plan.target();
                        let corner = square_corner(center, leg, s.search_leg + 1);
                        if fly_toward(&mut agent.position, corner, step) {
                            s.search_leg += 1;
                        }
                    }
                }
                _ => {
                    moving = false;
                    agent.mode = UavMode::TransitBack;
                    out.events.push(UavEvent::PickupFailed { sortie: sortie_id, mug });
                }
            }
        }
        UavMode::HoverDeploy => {
            moving = false;
            let s = agent.sortie.as_mut().expect("sortie in flight");
            s.hover_elapsed += dt;
            if s.hover_elapsed + 1e-9 >= agent.config.deploy_time {
                if let Some(mug) = agent.carrying.take() {
                    out.events.push(UavEvent::Released {
                        sortie: sortie_id,
                        mug,
                        at: agent.position,
                    });
                }
                agent.mode = UavMode::TransitBack;
            }
        }
        UavMode::RelayLoiter => {
            moving = false;
            let until = agent.sortie.as_ref().map(|s| s.loiter_until).unwrap_or(0.0);
            if ctx.now + dt >= until {
                agent.mode = UavMode::TransitBack;
                agent.altitude = agent.config.cruise_altitude;
            }
        }
        UavMode::TransitBack => {
            if fly_toward(&mut agent.position, ctx.home, step) {
                agent.mode = UavMode::DockedCharging;
                agent.altitude = agent.config.deck_height;
                agent.sortie = None;
                out.events.push(UavEvent::Docked {
                    sortie: sortie_id,
                    charge: agent.battery.charge,
                    reserve,
                    carrying: agent.carrying.take(),
                });
            }
        }
        UavMode::DockedCharging | UavMode::EmergencyLand => unreachable!(),
    }

    let base = if moving { p.cruise_power } else { p.hover_power };
    let power = base * p.multiplier(carrying);
    let step = battery_step(&mut agent.battery, power, dt);
    out.consumed = power * dt / 3600.0;
    out.unserved = step.unserved;

    if agent.mode.airborne() && agent.battery.charge < agent.config.emergency_floor {
        agent.mode = UavMode::EmergencyLand;
        agent.altitude = 0.0;
        let carrying = agent.carrying.take();
        out.events.push(UavEvent::EmergencyLand {
            sortie: agent.sortie.as_ref().map(|s| s.plan.id),
            charge: agent.battery.charge,
            at: agent.position,
            carrying,
        });
    }
    out
}
