use super::SortiePlan;
use crate::ids::VehicleId;
use crate::physics::Environment;
use crate::powertrain::solar_harvest;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// UAV state as seen by the forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavForecastState {
    pub charge: f64,
    pub capacity: f64,
    /// Time the UAV is expected back on the pad, `None` when docked.
    pub returns_at: Option<f64>,
    /// Energy still to be drawn before it returns, Wh.
    pub remaining_draw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastInput<'a> {
    pub now: f64,
    pub usv_charge: f64,
    pub usv_capacity: f64,
    pub usv_hotel: f64,
    pub recharge_power: f64,
    pub uavs: BTreeMap<VehicleId, UavForecastState>,
    /// Sorties planned but not yet launched.
    pub committed: &'a [SortiePlan],
    pub env: &'a Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyForecast {
    pub start: f64,
    pub horizon: f64,
    pub step: f64,
    pub times: Vec<f64>,
    pub usv_charge: Vec<f64>,
    pub uav_charge: BTreeMap<VehicleId, Vec<f64>>,
    pub assumptions: Vec<String>,
}

impl EnergyForecast {
    fn index_at(&self, t: f64) -> usize {
        if self.step <= 0.0 || t <= self.start {
            return 0;
        }
        (((t - self.start) / self.step).floor() as usize).min(self.times.len() - 1)
    }

    pub fn uav_charge_at(&self, uav: &VehicleId, t: f64) -> Option<f64> {
        self.uav_charge.get(uav).map(|c| c[self.index_at(t)])
    }

    pub fn usv_charge_at(&self, t: f64) -> f64 {
        self.usv_charge[self.index_at(t)]
    }

    /// First sample time at which the UAV holds at least `required` Wh.
    pub fn earliest(&self, uav: &VehicleId, required: f64) -> Option<f64> {
        let curve = self.uav_charge.get(uav)?;
        curve
            .iter()
            .position(|c| *c >= required - 1e-9)
            .map(|i| self.times[i])
    }
}

/// A forecast computed on first request and cached.
pub struct LazyForecast<'a> {
    cell: std::cell::OnceCell<EnergyForecast>,
    build: Box<dyn Fn() -> EnergyForecast + 'a>,
}

impl<'a> LazyForecast<'a> {
    pub fn new(build: impl Fn() -> EnergyForecast + 'a) -> Self {
        Self { cell: std::cell::OnceCell::new(), build: Box::new(build) }
    }

    pub fn ready(forecast: EnergyForecast) -> Self {
        let cell = std::cell::OnceCell::new();
        let _ = cell.set(forecast);
        Self { cell, build: Box::new(|| unreachable!("forecast already set")) }
    }

    pub fn get(&self) -> &EnergyForecast {
        self.cell.get_or_init(|| (self.build)())
    }
}

/// Deterministic rollout of solar input, hotel load, committed sorties and
/// dock charging. The dock charges one UAV at a time, lowest id first.
pub fn forecast_energy(input: &ForecastInput<'_>, horizon: f64, step: f64) -> EnergyForecast {
    let n = if horizon > 0.0 && step > 0.0 {
        (horizon / step).ceil() as usize
    } else {
        0
    };
    let mut usv = input.usv_charge;
    let mut uavs = input.uavs.clone();
    let mut out = EnergyForecast {
        start: input.now,
        horizon: horizon.max(0.0),
        step,
        times: Vec::with_capacity(n + 1),
        usv_charge: Vec::with_capacity(n + 1),
        uav_charge: uavs.keys().map(|k| (k.clone(), Vec::with_capacity(n + 1))).collect(),
        assumptions: vec![
            format!("usv hotel {:.1} W", input.usv_hotel),
            format!("dock recharge {:.1} W", input.recharge_power),
        ],
    };
    let mut launched = vec![false; input.committed.len()];
    for p in input.committed {
        out.assumptions.push(format!(
            "sortie {} on {} at {:.0} s: {:.2} Wh",
            p.id, p.uav, p.launch_time, p.energy_estimate
        ));
    }
    let record = |out: &mut EnergyForecast, t: f64, usv: f64, uavs: &BTreeMap<VehicleId, UavForecastState>| {
        out.times.push(t);
        out.usv_charge.push(usv);
        for (k, s) in uavs {
            out.uav_charge.get_mut(k).expect("same keys").push(s.charge);
        }
    };
    let mut t = input.now;
    // in-flight draws land at the start
    for s in uavs.values_mut() {
        s.charge = (s.charge - s.remaining_draw).max(0.0);
        s.remaining_draw = 0.0;
    }
    for (i, p) in input.committed.iter().enumerate() {
        if p.launch_time <= t {
            if let Some(s) = uavs.get_mut(&p.uav) {
                s.charge = (s.charge - p.energy_estimate).max(0.0);
                s.returns_at = Some(p.expected_return);
            }
            launched[i] = true;
        }
    }
    record(&mut out, t, usv, &uavs);
    for _ in 0..n {
        let h = step.min(input.now + horizon - t);
        let solar = solar_harvest(t, input.env);
        usv = (usv + (solar - input.usv_hotel) * h / 3600.0).clamp(0.0, input.usv_capacity);
        for s in uavs.values_mut() {
            if s.returns_at.is_some_and(|r| r <= t) {
                s.returns_at = None;
            }
        }
        if let Some(s) = uavs
            .values_mut()
            .find(|s| s.returns_at.is_none() && s.charge < s.capacity)
        {
            let amount = (input.recharge_power * h / 3600.0)
                .min(s.capacity - s.charge)
                .min(usv);
            s.charge += amount;
            usv -= amount;
        }
        t += h;
        for (i, p) in input.committed.iter().enumerate() {
            if !launched[i] && p.launch_time <= t {
                if let Some(s) = uavs.get_mut(&p.uav) {
                    s.charge = (s.charge - p.energy_estimate).max(0.0);
                    s.returns_at = Some(p.expected_return);
                }
                launched[i] = true;
            }
        }
        record(&mut out, t, usv, &uavs);
    }
    out
}
