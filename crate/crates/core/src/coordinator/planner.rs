use super::{Decision, DeferReason, LazyForecast, Objective, PlanError, SortiePlan};
use crate::agents::uav::dist;
use crate::agents::{UavAgent, UsvAgent};
use crate::ids::VehicleId;
use crate::powertrain::{uav_leg_energy, UavPowerModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]

pub struct Shoal {
    pub center: [f64; 2],
    pub radius: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bathymetry {
    pub default_depth: f64,
    pub shoals: Vec<Shoal>,
}

impl Default for Bathymetry {
    fn default() -> Self {
        Self {
            default_depth: 1000.0,
            shoals: Vec::new(),
        }
    }
}

impl Bathymetry {
    pub fn depth_at(&self, p: [f64; 2]) -> f64 {
        self.shoals
            .iter()
            .filter(|s| dist(s.center, p) <= s.radius)
            .map(|s| s.depth)
            .fold(self.default_depth, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoordinatorConfig {
    /// Registered planner name.
    pub planner: String,
    pub reserve_fraction: f64,
    pub decision_interval: f64,
    pub forecast_horizon: f64,
    pub forecast_step: f64,
    pub relay_threshold: usize,
    /// Loiter added to the queue drain time of a relay sortie, s.
    pub relay_guard: f64,
    pub min_drop_depth: f64,
    pub bathymetry: Bathymetry,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self {
            planner: "greedy".into(),
            reserve_fraction: 0.2,
            decision_interval: 60.0,
            forecast_horizon: 86_400.0,
            forecast_step: 60.0,
            relay_threshold: 50,
            relay_guard: 60.0,
            min_drop_depth: 250.0,
            bathymetry: Bathymetry::default(),
        }
    }
}

/// What the vessel knows about a glider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownMug {
    pub id: VehicleId,
    pub position: [f64; 2],
    pub sigma: f64,
    pub mode: String,
    pub in_bay: bool,
    pub carried: bool,
    pub recovery_requested: bool,
    /// Expected surface drift, east/north m/s.
    #[serde(default)]
    pub drift: [f64; 2],
    /// Age of `position` when the view was built, s.
    #[serde(default)]
    pub fix_age: f64,
}

impl KnownMug {
    pub fn awaiting_recovery(&self) -> bool {
        !self.in_bay
            && !self.carried
            && matches!(self.mode.as_str(), "WAIT_RECOVERY" | "FAULT_LOW_BATTERY")
    }
}

/// Glider telemetry backlog; supplied by the simulator, not sensed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayStats {
    pub mug: VehicleId,
    pub queued: usize,
    pub queued_bytes: u64,
    pub surfaced: bool,
    pub direct_link: bool,
    pub position: [f64; 2],
}

pub struct PlannerView<'a> {
    pub now: f64,
    pub usv: &'a UsvAgent,
    pub uavs: &'a [UavAgent],
    pub mugs: &'a [KnownMug],
    pub pending_deploys: &'a [(VehicleId, [f64; 2])],
    pub relay: &'a [RelayStats],
    /// Gliders already targeted by a sortie in flight.
    pub busy_mugs: &'a [VehicleId],
    pub relay_active: bool,
    pub bandwidth: f64,
    /// Energy forecast, built on first use.
    pub forecast: &'a LazyForecast<'a>,
    pub config: &'a CoordinatorConfig,
    pub next_plan_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    /// What the decision is about, e.g. "recover:mug-1".
    pub subject: String,
    pub decision: Decision,
}

/// A sortie planning policy. Implementations are registered by name.
pub trait SortiePlanner: Send + Sync {
    fn name(&self) -> &str;

    /// Decide on sorties for this step. At most one plan is returned
    /// because the vessel has a single launch pad.
    fn decide(&self, view: &PlannerView<'_>) -> Vec<PlanOutcome>;

    /// Gate for externally injected sorties.
    fn admit(&self, plan: &SortiePlan, charge: f64) -> bool;
}

/// Energy for a recovery: out with search allowance and pickup hover,
/// back loaded.
pub fn recovery_energy(out: f64, back: f64, sigma: f64, pickup_time: f64, p: &UavPowerModel) -> f64 {
    uav_leg_energy(out + 2.0 * sigma, pickup_time, false, p) + uav_leg_energy(back, 0.0, true, p)
}

/// Energy for a deployment: out and release hover loaded, back empty.
pub fn deploy_energy(out: f64, back: f64, deploy_time: f64, p: &UavPowerModel) -> f64 {
    uav_leg_energy(out, deploy_time, true, p) + uav_leg_energy(back, 0.0, false, p)
}

fn relay_energy(out: f64, back: f64, duration: f64, p: &UavPowerModel) -> f64 {
    uav_leg_energy(out, duration, false, p) + uav_leg_energy(back, 0.0, false, p)
}

/// Legs from the vessel to `target` and back to where the vessel will be,
/// iterating the return point against the flight time.
fn legs_to(usv: &UsvAgent, target: [f64; 2], dwell: f64, p: &UavPowerModel) -> (f64, f64, f64) {
    let out = dist(usv.position, target);
    let t_out = out / p.cruise_speed + dwell;
    let leaving = dist(target, usv.predict_position(t_out));
    let mut back = leaving;
    for _ in 0..3 {
        back = dist(target, usv.predict_position(t_out + back / p.cruise_speed));
    }
    // energy is priced as a chase of a USV steaming straight away, the same
    // bound the turn-back rule uses in flight
    let closing = (p.cruise_speed - usv.effective_speed()).max(0.1 * p.cruise_speed);
    let priced = (leaving * p.cruise_speed / closing).max(back);
    (out, priced, t_out + back / p.cruise_speed)
}

/// Where a drifting glider will be when a UAV leaving `from` now reaches it.
pub fn intercept(mug: &KnownMug, from: [f64; 2], speed: f64) -> [f64; 2] {
    let at = |t: f64| [mug.position[0] + mug.drift[0] * t, mug.position[1] + mug.drift[1] * t];
    let mut p = at(mug.fix_age);
    for _ in 0..4 {
        p = at(mug.fix_age + dist(from, p) / speed);
    }
    p
}

pub fn plan_recovery(
    mug: &KnownMug,
    uav: &UavAgent,
    usv: &UsvAgent,
    now: f64,
    reserve_fraction: f64,
    id: u64,
) -> Result<SortiePlan, PlanError> {
    if !mug.awaiting_recovery() {
        return Err(PlanError::NotRecoverable(mug.id.clone()));
    }
    let p = &uav.config.power;
    let dwell = uav.config.pickup_time + 2.0 * mug.sigma / p.cruise_speed;
    let at = intercept(mug, usv.position, p.cruise_speed);
    let (out, back, flight) = legs_to(usv, at, dwell, p);
    let ret = usv.predict_position(flight);
    let alt = uav.config.cruise_altitude;
    Ok(SortiePlan {
        id,
        uav: uav.id.clone(),
        objective: Objective::Recover { mug: mug.id.clone() },
        legs: vec![
            [usv.position[0], usv.position[1], alt],
            [at[0], at[1], alt],
            [ret[0], ret[1], alt],
        ],
        energy_estimate: recovery_energy(out, back, mug.sigma, uav.config.pickup_time, p),
        reserve_fraction,
        launch_time: now,
        expected_return: now + flight,
        search_sigma: mug.sigma,
        guarded: true,
        reserve_floor: uav.config.emergency_floor,
        cushion: uav.tick_cushion(),
    })
}

pub fn plan_deploy(
    mug: &VehicleId,
    drop_point: [f64; 2],
    uav: &UavAgent,
    usv: &UsvAgent,
    now: f64,
    reserve_fraction: f64,
    id: u64,
) -> SortiePlan {
    let p = &uav.config.power;
    let (out, back, flight) = legs_to(usv, drop_point, uav.config.deploy_time, p);
    let ret = usv.predict_position(flight);
    let alt = uav.config.cruise_altitude;
    SortiePlan {
        id,
        uav: uav.id.clone(),
        objective: Objective::Deploy { mug: mug.clone(), drop_point },
        legs: vec![
            [usv.position[0], usv.position[1], alt],
            [drop_point[0], drop_point[1], alt],
            [ret[0], ret[1], alt],
        ],
        energy_estimate: deploy_energy(out, back, uav.config.deploy_time, p),
        reserve_fraction,
        launch_time: now,
        expected_return: now + flight,
        search_sigma: 0.0,
        guarded: true,
        reserve_floor: uav.config.emergency_floor,
        cushion: uav.tick_cushion(),
    }
}

/// Relay sortie holding `station` at relay altitude for `duration`.
pub fn plan_relay(
    station: [f64; 2],
    duration: f64,
    uav: &UavAgent,
    usv: &UsvAgent,
    now: f64,
    reserve_fraction: f64,
    id: u64,
) -> SortiePlan {
    let p = &uav.config.power;
    let (out, back, flight) = legs_to(usv, station, duration, p);
    let ret = usv.predict_position(flight);
    let alt = uav.config.relay_altitude;
    SortiePlan {
        id,
        uav: uav.id.clone(),
        objective: Objective::Relay { station, duration },
        legs: vec![
            [usv.position[0], usv.position[1], alt],
            [station[0], station[1], alt],
            [ret[0], ret[1], alt],
        ],
        energy_estimate: relay_energy(out, back, duration, p),
        reserve_fraction,
        launch_time: now,
        expected_return: now + flight,
        search_sigma: 0.0,
        guarded: true,
        reserve_floor: uav.config.emergency_floor,
        cushion: uav.tick_cushion(),
    }
}

/// Relay sortie for the first glider whose backlog is over threshold and
/// has no direct link; the UAV holds the midpoint.
pub fn schedule_relay(
    stats: &[RelayStats],
    uav: &UavAgent,
    usv: &UsvAgent,
    now: f64,
    cfg: &CoordinatorConfig,
    bandwidth: f64,
    id: u64,
) -> Option<SortiePlan> {
    let s = stats
        .iter()
        .find(|s| s.surfaced && !s.direct_link && s.queued > cfg.relay_threshold)?;
    let mid = [
        0.5 * (usv.position[0] + s.position[0]),
        0.5 * (usv.position[1] + s.position[1]),
    ];
    let duration = s.queued_bytes as f64 / bandwidth.max(1e-9) + cfg.relay_guard;
    Some(plan_relay(mid, duration, uav, usv, now, cfg.reserve_fraction, id))
}

/// Deployment schedule for gliders in the bay. Launches are spaced by the
/// dock time needed to put back the previous sortie's energy.
pub fn plan_deployment(
    drops: &[(VehicleId, [f64; 2])],
    bay: &std::collections::BTreeSet<VehicleId>,
    uav: &UavAgent,
    usv: &UsvAgent,
    cfg: &CoordinatorConfig,
    now: f64,
    first_id: u64,
) -> Result<Vec<SortiePlan>, PlanError> {
    let mut plans: Vec<SortiePlan> = Vec::new();
    let mut t = now;
    for (i, (mug, at)) in drops.iter().enumerate() {
        if !bay.contains(mug) {
            return Err(PlanError::NotInBay(mug.clone()));
        }
        check_drop_depth(*at, cfg)?;
        if let Some(prev) = plans.last() {
            t = prev.launch_time + prev.energy_estimate / uav.config.power.recharge_power * 3600.0;
        }
        let mut plan = plan_deploy(mug, *at, uav, usv, t, cfg.reserve_fraction, first_id + i as u64);
        plan.expected_return += t - now;
        plans.push(plan);
    }
    Ok(plans)
}

pub fn check_drop_depth(at: [f64; 2], cfg: &CoordinatorConfig) -> Result<(), PlanError> {
    let depth = cfg.bathymetry.depth_at(at);
    if depth < cfg.min_drop_depth {
        return Err(PlanError::DropTooShallow {
            x: at[0],
            y: at[1],
            depth,
            min: cfg.min_drop_depth,
        });
    }
    Ok(())
}

/// Earliest-feasible greedy policy: deployments, then recoveries in id
/// order, then relays.
#[derive(Debug, Default, Clone, Copy)]
pub struct GreedyPlanner {
    pub check_energy: bool,
}

impl GreedyPlanner {
    pub fn checked() -> Self {
        Self { check_energy: true }
    }

    /// Same ordering without the energy gate. Only for fault injection.
    pub fn unchecked() -> Self {
        Self { check_energy: false }
    }
}

/// Plans nothing and admits nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoPlanner;

type Builder<'a> = Box<dyn Fn(&UavAgent, u64) -> Option<SortiePlan> + 'a>;

fn candidates<'a>(view: &'a PlannerView<'a>) -> Vec<(String, Builder<'a>)> {
    let mut out: Vec<(String, Builder<'a>)> = Vec::new();
    let now = view.now;
    let cfg = view.config;
    for (mug, at) in view.pending_deploys {
        if !view.usv.mug_bay.contains(mug) || view.busy_mugs.contains(mug) {
            continue;
        }
        let (mug, at) = (mug.clone(), *at);
        out.push((
            format!("deploy:{mug}"),
            Box::new(move |u, id| Some(plan_deploy(&mug, at, u, view.usv, now, cfg.reserve_fraction, id))),
        ));
    }
    for m in view.mugs {
        if !m.awaiting_recovery() || view.busy_mugs.contains(&m.id) {
            continue;
        }
        out.push((
            format!("recover:{}", m.id),
            Box::new(move |u, id| plan_recovery(m, u, view.usv, now, cfg.reserve_fraction, id).ok()),
        ));
    }
    if !view.relay_active {
        if let Some(s) = view
            .relay
            .iter()
            .find(|s| s.surfaced && !s.direct_link && s.queued > cfg.relay_threshold)
        {
            let subject = format!("relay:{}", s.mug);
            out.push((
                subject,
                Box::new(move |u, id| schedule_relay(view.relay, u, view.usv, now, cfg, view.bandwidth, id)),
            ));
        }
    }
    out
}

fn greedy(view: &PlannerView<'_>, check_energy: bool) -> Vec<PlanOutcome> {
    let mut outcomes = Vec::new();
    let docked: Vec<&UavAgent> = view.uavs.iter().filter(|u| u.is_docked()).collect();
    let mut launched = false;
    for (subject, build) in candidates(view) {
        if launched {
            outcomes.push(PlanOutcome {
                subject,
                decision: Decision::Deferred {
                    reason: DeferReason::DockBusy,
                    retry_at: view.now + view.config.decision_interval,
                },
            });
            continue;
        }
        let Some(uav) = docked.first() else {
            let retry_at = view
                .uavs
                .iter()
                .filter_map(|u| u.sortie.as_ref().map(|s| s.plan.expected_return))
                .fold(f64::INFINITY, f64::min)
                .min(view.now + view.config.forecast_horizon)
                .max(view.now + view.config.decision_interval);
            outcomes.push(PlanOutcome {
                subject,
                decision: Decision::Deferred {
                    reason: DeferReason::NoUav,
                    retry_at,
                },
            });
            continue;
        };
        // pick the best-charged docked UAV, ties to the lowest id
        let uav = docked
            .iter()
            .copied()
            .fold(*uav, |a, b| if b.battery.charge > a.battery.charge { b } else { a });
        let Some(mut plan) = build(uav, view.next_plan_id) else {
            continue;
        };
        plan.guarded = check_energy;
        if !check_energy || plan.launch_charge() <= uav.battery.charge {
            launched = true;
            outcomes.push(PlanOutcome {
                subject,
                decision: Decision::Plan(plan),
            });
        } else {
            let horizon_end = view.now + view.config.forecast_horizon;
            let retry_at = view.forecast.get()
                .earliest(&uav.id, plan.launch_charge())
                .unwrap_or(horizon_end)
                .max(view.now + view.config.decision_interval)
                .min(horizon_end);
            outcomes.push(PlanOutcome {
                subject,
                decision: Decision::Deferred {
                    reason: DeferReason::InsufficientEnergy,
                    retry_at,
                },
            });
        }
    }
    outcomes
}

impl SortiePlanner for GreedyPlanner {
    fn name(&self) -> &str {
        if self.check_energy {
            "greedy"
        } else {
            "unchecked"
        }
    }

    fn decide(&self, view: &PlannerView<'_>) -> Vec<PlanOutcome> {
        greedy(view, self.check_energy)
    }

    fn admit(&self, plan: &SortiePlan, charge: f64) -> bool {
        !self.check_energy || plan.launch_charge() <= charge
    }
}

impl SortiePlanner for NoPlanner {
    fn name(&self) -> &str {
        "none"
    }

    fn decide(&self, _view: &PlannerView<'_>) -> Vec<PlanOutcome> {
        Vec::new()
    }

    fn admit(&self, _plan: &SortiePlan, _charge: f64) -> bool {
        false
    }
}
