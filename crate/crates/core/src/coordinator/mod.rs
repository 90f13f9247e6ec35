//! Mission-level decisions on the surface vessel: energy forecasting and
//! UAV sortie planning.

pub mod forecast;
pub mod planner;

use crate::ids::VehicleId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forecast::{forecast_energy, EnergyForecast, ForecastInput, LazyForecast, UavForecastState};
pub use planner::{
    check_drop_depth, deploy_energy, plan_deploy, plan_deployment, plan_recovery, plan_relay,
    recovery_energy, schedule_relay, Bathymetry, CoordinatorConfig, GreedyPlanner, KnownMug,
    NoPlanner, PlanOutcome, PlannerView, RelayStats, Shoal, SortiePlanner,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Objective {
    Recover { mug: VehicleId },
    Deploy { mug: VehicleId, drop_point: [f64; 2] },
    Relay { station: [f64; 2], duration: f64 },
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Recover { .. } => "RECOVER",
            Objective::Deploy { .. } => "DEPLOY",
            Objective::Relay { .. } => "RELAY",
        }
    }

    pub fn mug(&self) -> Option<&VehicleId> {
        match self {
            Objective::Recover { mug } | Objective::Deploy { mug, .. } => Some(mug),
            Objective::Relay { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortiePlan {
    pub id: u64,
    pub uav: VehicleId,
    pub objective: Objective,
    /// Waypoints (east, north, altitude) from launch to return.
    pub legs: Vec<[f64; 3]>,
    pub energy_estimate: f64,
    pub reserve_fraction: f64,
    pub launch_time: f64,
    pub expected_return: f64,
    /// Radial uncertainty of the target at planning time, m.
    pub search_sigma: f64,
    /// Whether the UAV applies the in-flight turn-back rule. Cleared only
    /// when energy management is switched off.
    #[serde(default = "yes")]
    pub guarded: bool,
    /// Lower bound on the reserve, normally the UAV's emergency floor, Wh.
    #[serde(default)]
    pub reserve_floor: f64,
    /// Extra charge demanded at launch to cover the turn-back rule's
    /// per-tick allowance, Wh.
    #[serde(default)]
    pub cushion: f64,
}

fn yes() -> bool {
    true
}

impl SortiePlan {
    /// Energy the UAV must hold at launch.
    pub fn required_charge(&self) -> f64 {
        self.energy_estimate + self.protected_reserve()
    }

    /// Charge the greedy planner insists on before launching.
    pub fn launch_charge(&self) -> f64 {
        self.required_charge() + self.cushion
    }

    /// Charge the turn-back rule keeps in hand: the fractional reserve, but
    /// never less than the floor at which the UAV ditches.
    pub fn protected_reserve(&self) -> f64 {
        (self.reserve_fraction * self.energy_estimate).max(self.reserve_floor)
    }

    pub fn target(&self) -> [f64; 2] {
        match &self.objective {
            Objective::Relay { station, .. } => *station,
            Objective::Deploy { drop_point, .. } => *drop_point,
            Objective::Recover { .. } => {
                let p = self.legs.get(1).copied().unwrap_or([0.0; 3]);
                [p[0], p[1]]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Plan(SortiePlan),
    Deferred { reason: DeferReason, retry_at: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeferReason {
    InsufficientEnergy,
    DockBusy,
    NoUav,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("{0} is not in the water awaiting recovery")]
    NotRecoverable(VehicleId),
    #[error("{0} is not in the bay")]
    NotInBay(VehicleId),
    #[error("drop point ({x:.0}, {y:.0}) has {depth:.0} m of water, needs {min:.0} m")]
    DropTooShallow { x: f64, y: f64, depth: f64, min: f64 },
}
