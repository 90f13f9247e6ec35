//! Electrical models: the buoyancy-engine motor, battery bookkeeping, solar
//! harvesting on the surface vessel and multirotor flight energy.

use crate::physics::{gauge_pressure, Environment, PhysicsError, VbsState};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

const J_PER_WH: f64 = 3600.0;

#[derive(Debug, Error, PartialEq)]
pub enum PowertrainError {
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("stroke fraction {0} outside [-1, 1]")]
    BadStroke(f64),
    #[error("motor cannot move the piston: no-load current alone reaches the current limit")]
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Medium {
    Air,
    Oil,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotorModel {
    pub current_limit: f64,
    pub oil_current_multiplier: f64,
    pub bus_voltage_nominal: f64,
    pub drivetrain_efficiency: f64,
    pub no_load_current: f64,
    /// Piston speed set point, m/s.
    pub max_piston_speed: f64,
}

impl Default for MotorModel {
    fn default() -> Self {
        Self {
            current_limit: 0.5,
            oil_current_multiplier: 5.0,
            bus_voltage_nominal: 25.2,
            drivetrain_efficiency: 0.3,
            no_load_current: 0.02,
            max_piston_speed: 2e-3,
        }
    }
}

impl MotorModel {
    fn medium_factor(&self, medium: Medium) -> f64 {
        match medium {
            Medium::Air => 1.0,
            Medium::Oil => self.oil_current_multiplier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorDraw {
    pub current: f64,
    pub achieved_speed: f64,
    pub saturated: bool,
}

/// Current drawn to push `load_force` at `piston_speed`.
///
/// When the demand exceeds the continuous rating the drive holds the limit
/// and the piston slows down until the demand equals the limit.
pub fn motor_current(
    load_force: f64,
    piston_speed: f64,
    medium: Medium,
    model: &MotorModel,
) -> MotorDraw {
    let k = model.medium_factor(medium);
    let per_speed = load_force / (model.drivetrain_efficiency * model.bus_voltage_nominal);
    let demanded = k * (model.no_load_current + per_speed * piston_speed);
    if demanded <= model.current_limit {
        return MotorDraw {
            current: demanded,
            achieved_speed: piston_speed,
            saturated: false,
        };
    }
    let headroom = model.current_limit / k - model.no_load_current;
    let achieved_speed = if headroom <= 0.0 || per_speed <= 0.0 {
        0.0
    } else {
        (headroom / per_speed).min(piston_speed)
    };
    MotorDraw {
        current: model.current_limit,
        achieved_speed,
        saturated: true,
    }
}

/// Load on the piston when extending against the sea at `depth`, N.
pub fn extension_load(depth: f64, vbs: &VbsState, env: &Environment) -> Result<f64, PhysicsError> {
    Ok(gauge_pressure(depth, env)? * vbs.piston_area)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrokeEnergy {
    pub wh: f64,
    /// Time the motor runs, s.
    pub duration: f64,
    /// Piston speed actually achieved, m/s.
    pub speed: f64,
}

/// Electrical energy for moving the piston by `delta_fraction` at `depth`.
///
/// Extending costs the pressure-volume work divided by drivetrain efficiency
/// plus no-load overhead for the time the stroke takes; retracting is driven
/// by ambient pressure and only pays the overhead. The stroke time follows
/// from the speed the motor reaches under the current limit in oil.
pub fn vbs_stroke_energy(
    depth: f64,
    delta_fraction: f64,
    model: &MotorModel,
    vbs: &VbsState,
    env: &Environment,
) -> Result<StrokeEnergy, PowertrainError> {
    if !(-1.0..=1.0).contains(&delta_fraction) {
        return Err(PowertrainError::BadStroke(delta_fraction));
    }
    let gauge = gauge_pressure(depth, env)?;
    if delta_fraction == 0.0 {
        return Ok(StrokeEnergy {
            wh: 0.0,
            duration: 0.0,
            speed: model.max_piston_speed,
        });
    }
    let extending = delta_fraction > 0.0;
    let load = if extending { gauge * vbs.piston_area } else { 0.0 };
    let draw = motor_current(load, model.max_piston_speed, Medium::Oil, model);
    if draw.achieved_speed <= 0.0 {
        return Err(PowertrainError::Stalled);
    }
    let travel = delta_fraction.abs() * vbs.stroke_length;
    let duration = travel / draw.achieved_speed;
    let work = if extending {
        gauge * delta_fraction * vbs.max_displaced_volume / model.drivetrain_efficiency
    } else {
        0.0
    };
    let overhead = model.no_load_current * model.bus_voltage_nominal * duration;
    Ok(StrokeEnergy {
        wh: (work + overhead) / J_PER_WH,
        duration,
        speed: draw.achieved_speed,
    })
}

/// Battery with an explicit in/out ledger.
///
/// `charge - initial_charge == cumulative_in - cumulative_out` holds after
/// every operation; energy refused at a full store is counted as curtailed
/// and energy a load asked for from an empty store as unserved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyStore {
    pub capacity: f64,
    pub charge: f64,
    pub initial_charge: f64,
    pub voltage_nominal: f64,
    pub reserve_floor: f64,
    pub cumulative_in: f64,
    pub cumulative_out: f64,
    pub curtailed: f64,
    pub unserved: f64,
}

impl EnergyStore {
    pub fn new(capacity: f64, charge: f64, voltage_nominal: f64, reserve_floor: f64) -> Self {
        Self {
            capacity,
            charge,
            initial_charge: charge,
            voltage_nominal,
            reserve_floor,
            cumulative_in: 0.0,
            cumulative_out: 0.0,
            curtailed: 0.0,
            unserved: 0.0,
        }
    }

    /// Glider pack: 25.2 V, 3.5 Ah, reserve at 20 %.
    pub fn mug_default() -> Self {
        let capacity = 25.2 * 3.5;
        Self::new(capacity, capacity, 25.2, 0.2 * capacity)
    }

    pub fn room(&self) -> f64 {
        self.capacity - self.charge
    }

    pub fn is_low(&self) -> bool {
        self.charge < self.reserve_floor
    }

    pub fn is_depleted(&self) -> bool {
        self.charge <= 0.0
    }

    /// Residual of the ledger identity, Wh.
    pub fn ledger_residual(&self) -> f64 {
        (self.charge - self.initial_charge) - (self.cumulative_in - self.cumulative_out)
    }

    pub fn ledger_closes(&self, rel_tol: f64) -> bool {
        let scale = self
            .capacity
            .max(self.cumulative_in)
            .max(self.cumulative_out)
            .max(1.0);
        self.ledger_residual().abs() <= rel_tol * scale
    }

    /// Add up to `wh`; returns the amount accepted.
    pub fn deposit(&mut self, wh: f64) -> f64 {
        let accepted = wh.max(0.0).min(self.room().max(0.0));
        self.charge += accepted;
        self.cumulative_in += accepted;
        accepted
    }

    /// Remove up to `wh`; returns the amount delivered.
    pub fn withdraw(&mut self, wh: f64) -> f64 {
        let delivered = wh.max(0.0).min(self.charge.max(0.0));
        self.charge -= delivered;
        self.cumulative_out += delivered;
        delivered
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatteryStep {
    /// Signed change of charge actually applied, Wh.
    pub applied: f64,
    pub curtailed: f64,
    pub unserved: f64,
    pub low: bool,
    pub depleted: bool,
}

/// Integrate `net_power` (positive = discharge) over `dt` seconds.
pub fn battery_step(store: &mut EnergyStore, net_power: f64, dt: f64) -> BatteryStep {
    debug_assert!(dt > 0.0);
    let requested = net_power * dt / J_PER_WH;
    let mut out = BatteryStep::default();
    if requested > 0.0 {
        let was_empty = store.is_depleted();
        let delivered = store.withdraw(requested);
        out.applied = -delivered;
        out.unserved = requested - delivered;
        store.unserved += out.unserved;
        out.depleted = was_empty || out.unserved > 0.0 || store.is_depleted();
    } else if requested < 0.0 {
        let accepted = store.deposit(-requested);
        out.applied = accepted;
        out.curtailed = -requested - accepted;
        store.curtailed += out.curtailed;
        out.depleted = store.is_depleted();
    } else {
        out.depleted = store.is_depleted();
    }
    out.low = store.charge < store.reserve_floor;
    out
}

/// Move energy between stores at `power` W for `dt` s; returns Wh moved.
pub fn transfer(from: &mut EnergyStore, to: &mut EnergyStore, power: f64, dt: f64) -> f64 {
    let wanted = (power * dt / J_PER_WH).max(0.0);
    let amount = wanted.min(from.charge.max(0.0)).min(to.room().max(0.0));
    from.withdraw(amount);
    to.deposit(amount);
    amount
}

/// Half-sine daylight model, W.
pub fn solar_harvest(time_of_day: f64, env: &Environment) -> f64 {
    let phase = 2.0 * PI * time_of_day.rem_euclid(env.day_length) / env.day_length;
    (env.solar_peak * phase.sin()).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UavPowerModel {
    pub hover_power: f64,
    pub cruise_power: f64,
    pub cruise_speed: f64,
    pub payload_power_multiplier: f64,
    pub battery_capacity: f64,
    pub recharge_power: f64,
}

impl Default for UavPowerModel {
    fn default() -> Self {
        Self {
            hover_power: 350.0,
            cruise_power: 250.0,
            cruise_speed: 10.0,
            payload_power_multiplier: 1.3,
            battery_capacity: 100.0,
            recharge_power: 60.0,
        }
    }
}

impl UavPowerModel {
    pub fn multiplier(&self, carrying: bool) -> f64 {
        if carrying {
            self.payload_power_multiplier
        } else {
            1.0
        }
    }
}

/// Energy of one flight leg, Wh.
pub fn uav_leg_energy(
    distance: f64,
    hover_time: f64,
    carrying_payload: bool,
    model: &UavPowerModel,
) -> f64 {
    let joules =
        model.cruise_power * (distance / model.cruise_speed) + model.hover_power * hover_time;
    joules * model.multiplier(carrying_payload) / J_PER_WH
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn no_load_current_in_air() {
        let m = MotorModel::default();
        let d = motor_current(0.0, 0.0, Medium::Air, &m);
        assert_eq!(d.current, 0.02);
        assert!(!d.saturated);
    }

    #[test]
    fn oil_is_five_times_air() {
        let m = MotorModel::default();
        let air = motor_current(50.0, 1e-3, Medium::Air, &m);
        let oil = motor_current(50.0, 1e-3, Medium::Oil, &m);
        assert!(!oil.saturated);
        assert_relative_eq!(oil.current / air.current, 5.0, max_relative = 1e-12);
    }

    #[test]
    fn full_load_at_depth_saturates() {
        let m = MotorModel::default();
        let env = Environment::default();
        let vbs = VbsState::default();
        let load = extension_load(200.0, &vbs, &env).unwrap();
        assert_relative_eq!(load, 1005.525, max_relative = 1e-9);
        // (0.02 + 1005.525 * 2e-3 / (0.3 * 25.2)) * 5 = 1.4302
        let demanded = (0.02 + load * 2e-3 / (0.3 * 25.2)) * 5.0;
        assert!((demanded - 1.430).abs() < 1e-3);
        let d = motor_current(load, 2e-3, Medium::Oil, &m);
        assert!(d.saturated);
        assert_eq!(d.current, 0.5);
        // solve 5 * (0.02 + load * v / 7.56) = 0.5
        let expected = (0.5 / 5.0 - 0.02) * 0.3 * 25.2 / load;
        assert_relative_eq!(d.achieved_speed, expected, max_relative = 1e-12);
        assert!(d.achieved_speed < 2e-3);
    }

    #[test]
    fn stall_when_no_load_exceeds_limit() {
        let m = MotorModel {
            no_load_current: 0.2,
            ..MotorModel::default()
        };
        let d = motor_current(10.0, 1e-3, Medium::Oil, &m);
        assert!(d.saturated);
        assert_eq!(d.achieved_speed, 0.0);
    }

    #[test]
    fn stroke_energy_cases() {
        let m = MotorModel::default();
        let env = Environment::default();
        let vbs = VbsState::default();
        assert_eq!(vbs_stroke_energy(10.0, 0.0, &m, &vbs, &env).unwrap().wh, 0.0);

        let deep = vbs_stroke_energy(200.0, 1.0, &m, &vbs, &env).unwrap();
        let work_wh: f64 = 2_011_050.0 * 1e-4 / 0.3 / 3600.0;
        assert!((work_wh - 0.186).abs() < 1e-3);
        let overhead_wh = 0.02 * 25.2 * deep.duration / 3600.0;
        assert_relative_eq!(deep.wh, work_wh + overhead_wh, max_relative = 1e-12);

        let surface = vbs_stroke_energy(0.0, 1.0, &m, &vbs, &env).unwrap();
        // full stroke at set point speed: 0.2 m / 2e-3 m/s = 100 s of overhead
        assert_relative_eq!(surface.duration, 100.0, max_relative = 1e-12);
        assert_relative_eq!(surface.wh, 0.02 * 25.2 * 100.0 / 3600.0, max_relative = 1e-12);

        let retract = vbs_stroke_energy(200.0, -1.0, &m, &vbs, &env).unwrap();
        assert_relative_eq!(retract.wh, surface.wh, max_relative = 1e-12);
        assert!(vbs_stroke_energy(0.0, 1.5, &m, &vbs, &env).is_err());
    }

    #[test]
    fn battery_idle_is_noop() {
        let mut s = EnergyStore::mug_default();
        let before = s;
        let r = battery_step(&mut s, 0.0, 1.0);
        assert_eq!(s, before);
        assert_eq!(r.applied, 0.0);
    }

    #[test]
    fn mug_pack_empties_in_seven_days_at_half_watt() {
        let mut s = EnergyStore::mug_default();
        assert_relative_eq!(s.capacity, 88.2, max_relative = 1e-12);
        // 88.2 Wh / 0.5 W = 176.4 h
        let steps = (176.4 * 3600.0) as usize;
        let mut last = BatteryStep::default();
        for _ in 0..steps - 60 {
            last = battery_step(&mut s, 0.5, 1.0);
        }
        assert!(!last.depleted);
        for _ in 0..120 {
            last = battery_step(&mut s, 0.5, 1.0);
        }
        assert!(last.depleted);
        assert_eq!(s.charge, 0.0);
        assert!(s.ledger_closes(1e-9));
    }

    #[test]
    fn charging_clamps_and_records_curtailment() {
        let mut s = EnergyStore::new(100.0, 50.0, 25.2, 20.0);
        let r = battery_step(&mut s, -60.0, 3600.0);
        assert_eq!(s.charge, 100.0);
        assert_relative_eq!(r.curtailed, 10.0, max_relative = 1e-12);
        assert_relative_eq!(s.curtailed, 10.0, max_relative = 1e-12);
        assert!(s.ledger_closes(1e-12));
    }

    #[test]
    fn drawing_from_empty_reports_depleted() {
        let mut s = EnergyStore::new(10.0, 0.0, 12.0, 1.0);
        let r = battery_step(&mut s, 1.0, 1.0);
        assert!(r.depleted && r.low);
        assert!(r.unserved > 0.0);
    }

    #[test]
    fn transfer_conserves() {
        let mut a = EnergyStore::new(500.0, 100.0, 24.0, 0.0);
        let mut b = EnergyStore::new(100.0, 95.0, 22.2, 0.0);
        let moved = transfer(&mut a, &mut b, 60.0, 3600.0);
        assert_relative_eq!(moved, 5.0, max_relative = 1e-12);
        assert_relative_eq!(a.charge + b.charge, 195.0, max_relative = 1e-12);
    }

    #[test]
    fn solar_shape() {
        let env = Environment::default();
        assert_eq!(solar_harvest(0.0, &env), 0.0);
        assert_relative_eq!(solar_harvest(21_600.0, &env), 50.0, max_relative = 1e-12);
        assert_eq!(solar_harvest(64_800.0, &env), 0.0);
    }

    #[test]
    fn solar_daily_integral_matches_closed_form() {
        let env = Environment::default();
        // composite Simpson over one day
        let n = 8640;
        let h = env.day_length / n as f64;
        let mut sum = solar_harvest(0.0, &env) + solar_harvest(env.day_length - 1e-9, &env);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * solar_harvest(i as f64 * h, &env);
        }
        let numeric = sum * h / 3.0;
        let analytic = env.solar_peak * env.day_length / PI;
        assert!((numeric - analytic).abs() / analytic < 0.005);
        // 50 W peak → ≈ 382 Wh per day
        assert!((analytic / 3600.0 - 382.0).abs() < 0.5);
    }

    #[test]
    fn leg_energy_fixtures() {
        let m = UavPowerModel::default();
        assert_eq!(uav_leg_energy(0.0, 0.0, false, &m), 0.0);
        let long = uav_leg_energy(5000.0, 60.0, false, &m) + uav_leg_energy(5000.0, 0.0, true, &m);
        assert!((long - 85.7).abs() < 0.05);
        assert!(long * 1.2 > m.battery_capacity);
        let short = uav_leg_energy(1000.0, 60.0, false, &m) + uav_leg_energy(1000.0, 0.0, true, &m);
        assert!((short - 21.8).abs() < 0.05);
        assert!(short * 1.2 <= m.battery_capacity);
    }
}
