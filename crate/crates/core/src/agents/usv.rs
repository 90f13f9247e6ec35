//! Wave-propelled surface vessel: track keeping, solar harvest, dock and bay.

use crate::ids::VehicleId;
use crate::physics::Environment;
use crate::powertrain::{battery_step, solar_harvest, BatteryStep, EnergyStore};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UsvConfig {
    pub id: VehicleId,
    pub position: [f64; 2],
    pub track: Vec<[f64; 2]>,
    pub speed: f64,
    pub battery_capacity: f64,
    pub initial_charge: Option<f64>,
    pub hotel_power: f64,
    pub mast_height: f64,
}

impl Default for UsvConfig {
    fn default() -> Self {
        Self {
            id: VehicleId::new("usv"),
            position: [0.0, 0.0],
            track: Vec::new(),
            speed: 1.0,
            battery_capacity: 1000.0,
            initial_charge: Some(800.0),
            hotel_power: 5.0,
            mast_height: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsvAgent {
    pub id: VehicleId,
    pub config: UsvConfig,
    pub position: [f64; 2],
    pub track: Vec<[f64; 2]>,
    pub next_waypoint: usize,
    pub speed: f64,
    pub battery: EnergyStore,
    /// UAV currently on the charging pad.
    pub dock_occupied: Option<VehicleId>,
    pub mug_bay: BTreeSet<VehicleId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UsvTick {
    pub harvested: f64,
    pub hotel: f64,
    pub battery: BatteryStep,
}

/// Walk `distance` metres along a cyclic waypoint track. Distance left over
/// at a waypoint carries on toward the next one.
pub fn advance_along_track(
    mut position: [f64; 2],
    track: &[[f64; 2]],
    mut next: usize,
    mut distance: f64,
) -> ([f64; 2], usize) {
    if track.is_empty() {
        return (position, 0);
    }
    next %= track.len();
    let mut guard = 0;
    while distance > 0.0 && guard < 4 * track.len() + 4 {
        let wp = track[next];
        let d = (wp[0] - position[0]).hypot(wp[1] - position[1]);
        if d > distance {
            position[0] += (wp[0] - position[0]) * distance / d;
            position[1] += (wp[1] - position[1]) * distance / d;
            break;
        }
        position = wp;
        distance -= d;
        next = (next + 1) % track.len();
        // a single-point track, or a loop of coincident points, is a station
        if d == 0.0 {
            guard += 1;
        }
    }
    (position, next)
}

impl UsvAgent {
    pub fn new(config: UsvConfig) -> Self {
        let cap = config.battery_capacity;
        let charge = config.initial_charge.unwrap_or(cap).clamp(0.0, cap);
        Self {
            id: config.id.clone(),
            position: config.position,
            track: config.track.clone(),
            next_waypoint: 0,
            speed: config.speed,
            battery: EnergyStore::new(cap, charge, 24.0, 0.0),
            dock_occupied: None,
            mug_bay: BTreeSet::new(),
            config,
        }
    }

    /// Where the vessel will be `horizon` seconds from now.
    pub fn predict_position(&self, horizon: f64) -> [f64; 2] {
        advance_along_track(self.position, &self.track, self.next_waypoint, self.speed * horizon.max(0.0)).0
    }

    pub fn effective_speed(&self) -> f64 {
        if self.track.is_empty() {
            0.0
        } else {
            self.speed
        }
    }

    pub fn retask(&mut self, track: Vec<[f64; 2]>) {
        self.track = track;
        self.next_waypoint = 0;
    }
}

pub fn usv_tick(agent: &mut UsvAgent, env: &Environment, now: f64, dt: f64) -> UsvTick {
    let (p, n) = advance_along_track(agent.position, &agent.track, agent.next_waypoint, agent.speed * dt);
    agent.position = p;
    agent.next_waypoint = n;
    let solar = solar_harvest(now, env);
    let hotel = agent.config.hotel_power;
    UsvTick {
        harvested: solar * dt / 3600.0,
        hotel: hotel * dt / 3600.0,
        battery: battery_step(&mut agent.battery, hotel - solar, dt),
    }
}
