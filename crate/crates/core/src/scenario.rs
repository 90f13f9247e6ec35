//! Scenario documents (TOML): parsing, defaults and validation.

use crate::agents::{MugConfig, UavConfig, UsvConfig};
use crate::comms::CommsConfig;
use crate::coordinator::{check_drop_depth, CoordinatorConfig};
use crate::ids::VehicleId;
use crate::physics::{Environment, MAX_DT};
use crate::registry;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("invalid `{field}`: {constraint}")]
    Invalid { field: String, constraint: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        constraint: constraint.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Spacing of vehicle telemetry rows, s. Does not affect the trajectory.
    pub telemetry_interval: f64,
    /// Reject unknown fields instead of warning.
    pub strict: bool,
    /// Ticks between message conservation checks.
    pub audit_every: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            duration: 3.0 * 86_400.0,
            dt: 1.0,
            seed: 1,
            telemetry_interval: 10.0,
            strict: true,
            audit_every: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub telemetry: String,
    pub events: String,
    pub summary: String,
    pub tracks: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            telemetry: "telemetry.jsonl".into(),
            events: "events.jsonl".into(),
            summary: "summary.csv".into(),
            tracks: "tracks.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcedKind {
    Relay,
    Recover,
}

/// A sortie injected at a fixed time. It still passes through the
/// planner's admission gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedSortie {
    pub at: f64,
    pub uav: VehicleId,
    pub kind: ForcedKind,
    pub target: [f64; 2],
    #[serde(default)]
    pub duration: f64,
    #[serde(default)]
    pub mug: Option<VehicleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub simulation: SimulationConfig,
    pub environment: Environment,
    pub comms: CommsConfig,
    pub coordinator: CoordinatorConfig,
    pub mug: Vec<MugConfig>,
    pub uav: Vec<UavConfig>,
    pub usv: UsvConfig,
    pub forced_sortie: Vec<ForcedSortie>,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            simulation: SimulationConfig::default(),
            environment: Environment::default(),
            comms: CommsConfig::default(),
            coordinator: CoordinatorConfig::default(),
            mug: Vec::new(),
            uav: vec![UavConfig::default()],
            usv: UsvConfig::default(),
            forced_sortie: Vec::new(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub config: ScenarioConfig,
    /// Unknown fields skipped in lenient mode.
    pub warnings: Vec<String>,
}

/// Parse and validate a scenario document. `strict` overrides the
/// document's own `simulation.strict` setting.
pub fn load_scenario_with(text: &str, strict: Option<bool>) -> Result<Loaded, ScenarioError> {
    let de = toml::Deserializer::new(text);
    let mut ignored = Vec::new();
    let config: ScenarioConfig = serde_ignored::deserialize(de, |path| ignored.push(path.to_string()))
        .map_err(|e| ScenarioError::Parse(e.to_string()))?;
    if strict.unwrap_or(config.simulation.strict) {
        if let Some(first) = ignored.first() {
            return Err(ScenarioError::UnknownField(first.clone()));
        }
    }
    validate(&config)?;
    Ok(Loaded {
        config,
        warnings: ignored.into_iter().map(|p| format!("ignored unknown field `{p}`")).collect(),
    })
}

pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    load_scenario_with(text, None).map(|l| l.config)
}

pub fn load_scenario_file(path: &Path) -> Result<Loaded, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })?;
    load_scenario_with(&text, None)
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be a positive number, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be zero or positive, got {v}")))
    }
}

fn fraction(field: &str, v: f64, upper_open: bool) -> Result<(), ScenarioError> {
    let ok = v.is_finite() && v >= 0.0 && if upper_open { v < 1.0 } else { v <= 1.0 };
    if ok {
        Ok(())
    } else {
        let range = if upper_open { "[0, 1)" } else { "[0, 1]" };
        Err(invalid(field, format!("must lie in {range}, got {v}")))
    }
}

fn charge(field: &str, initial: Option<f64>, capacity: f64) -> Result<(), ScenarioError> {
    match initial {
        Some(c) if !(0.0..=capacity).contains(&c) => Err(invalid(
            field,
            format!("must lie in [0, {capacity}] Wh, got {c}"),
        )),
        _ => Ok(()),
    }
}

pub fn validate(c: &ScenarioConfig) -> Result<(), ScenarioError> {
    let s = &c.simulation;
    positive("simulation.dt", s.dt)?;
    if s.dt > MAX_DT {
        return Err(invalid("simulation.dt", format!("must not exceed {MAX_DT} s")));
    }
    non_negative("simulation.duration", s.duration)?;
    if s.duration > 0.0 && s.duration < s.dt {
        return Err(invalid("simulation.duration", "must be 0 or at least one time step"));
    }
    positive("simulation.telemetry_interval", s.telemetry_interval)?;
    if s.audit_every == 0 {
        return Err(invalid("simulation.audit_every", "must be at least 1"));
    }

    let e = &c.environment;
    positive("environment.water_density", e.water_density)?;
    positive("environment.gravity", e.gravity)?;
    non_negative("environment.surface_pressure", e.surface_pressure)?;
    non_negative("environment.solar_peak", e.solar_peak)?;
    positive("environment.day_length", e.day_length)?;
    non_negative("environment.max_current", e.max_current)?;
    if e.current.max_speed() > e.max_current + 1e-12 {
        return Err(invalid(
            "environment.current.surface",
            format!("speed {:.3} m/s exceeds max_current {} m/s", e.current.max_speed(), e.max_current),
        ));
    }

    let k = &c.comms;
    if !registry::link_models().contains(&k.link_model) {
        return Err(invalid(
            "comms.link_model",
            format!(
                "unknown link model `{}`, must be one of {}",
                k.link_model,
                registry::link_models().names().join(", ")
            ),
        ));
    }
    fraction("comms.dropout_probability", k.dropout_probability, false)?;
    positive("comms.bandwidth", k.bandwidth)?;
    if k.queue_capacity == 0 {
        return Err(invalid("comms.queue_capacity", "must be at least 1"));
    }
    positive("comms.retransmit_timeout", k.retransmit_timeout)?;
    non_negative("comms.uplink_latency", k.uplink_latency)?;
    positive("comms.acoustic.range", k.acoustic.range)?;
    positive("comms.acoustic.sound_speed", k.acoustic.sound_speed)?;

    let co = &c.coordinator;
    if !registry::planners().contains(&co.planner) {
        return Err(invalid(
            "coordinator.planner",
            format!(
                "unknown planner `{}`, must be one of {}",
                co.planner,
                registry::planners().names().join(", ")
            ),
        ));
    }
    fraction("coordinator.reserve_fraction", co.reserve_fraction, true)?;
    positive("coordinator.decision_interval", co.decision_interval)?;
    positive("coordinator.forecast_horizon", co.forecast_horizon)?;
    positive("coordinator.forecast_step", co.forecast_step)?;
    non_negative("coordinator.relay_guard", co.relay_guard)?;

    let mut ids = BTreeSet::new();
    let mut unique = |field: &str, id: &VehicleId| {
        if id.as_str().is_empty() {
            return Err(invalid(field, "must not be empty"));
        }
        if !ids.insert(id.clone()) {
            return Err(invalid(field, format!("vehicle id `{id}` is used more than once")));
        }
        Ok(())
    };
    unique("usv.id", &c.usv.id)?;
    for (i, u) in c.uav.iter().enumerate() {
        unique(&format!("uav[{i}].id"), &u.id)?;
    }
    for (i, m) in c.mug.iter().enumerate() {
        unique(&format!("mug[{i}].id"), &m.id)?;
    }

    for (i, m) in c.mug.iter().enumerate() {
        let f = |name: &str| format!("mug[{i}].{name}");
        if m.vbs.geometry_mismatch() > 0.01 {
            return Err(invalid(
                f("vbs"),
                format!(
                    "piston_area x stroke_length = {:.1} cc must equal max_displaced_volume = {:.1} cc",
                    m.vbs.piston_area * m.vbs.stroke_length * 1e6,
                    m.vbs.max_displaced_volume * 1e6
                ),
            ));
        }
        positive(&f("vbs.max_displaced_volume"), m.vbs.max_displaced_volume)?;
        positive(&f("body.mass"), m.body.mass)?;
        positive(&f("body.frontal_area"), m.body.frontal_area)?;
        positive(&f("body.drag_coefficient"), m.body.drag_coefficient)?;
        non_negative(&f("body.added_mass_factor"), m.body.added_mass_factor)?;
        positive(&f("crush_depth"), m.crush_depth)?;
        if m.crush_depth > 200.0 {
            return Err(invalid(f("crush_depth"), "must not exceed 200 m"));
        }
        if !(m.target_depth > 0.0 && m.target_depth <= m.crush_depth) {
            return Err(invalid(
                f("target_depth"),
                format!("must lie in (0, crush_depth = {}] m, got {}", m.crush_depth, m.target_depth),
            ));
        }
        fraction(&f("neutral_fraction"), m.neutral_fraction, false)?;
        fraction(&f("heavy_stop"), m.heavy_stop, false)?;
        fraction(&f("light_stop"), m.light_stop, false)?;
        if !(m.heavy_stop < m.neutral_fraction && m.neutral_fraction < m.light_stop) {
            return Err(invalid(f("heavy_stop"), "must satisfy heavy_stop < neutral_fraction < light_stop"));
        }
        positive(&f("battery_capacity"), m.battery_capacity)?;
        charge(&f("initial_charge"), m.initial_charge, m.battery_capacity)?;
        fraction(&f("reserve_fraction"), m.reserve_fraction, true)?;
        non_negative(&f("hotel_power"), m.hotel_power)?;
        non_negative(&f("transmit_power"), m.transmit_power)?;
        non_negative(&f("glide_ratio"), m.glide_ratio)?;
        positive(&f("sample_interval"), m.sample_interval)?;
        if m.ctd_batch == 0 {
            return Err(invalid(f("ctd_batch"), "must be at least 1"));
        }
        non_negative(&f("fix_duration"), m.fix_duration)?;
        positive(&f("transmit_timeout"), m.transmit_timeout)?;
        positive(&f("recovery_beacon_interval"), m.recovery_beacon_interval)?;
        positive(&f("antenna_height"), m.antenna_height)?;
        non_negative(&f("nav.gps_noise"), m.nav.gps_noise)?;
        non_negative(&f("nav.drift_rate"), m.nav.drift_rate)?;
        if !m.ctd.is_sorted() {
            return Err(invalid(f("ctd"), "profiles must be non-empty with strictly increasing depth"));
        }
        positive(&f("motor.current_limit"), m.motor.current_limit)?;
        positive(&f("motor.bus_voltage_nominal"), m.motor.bus_voltage_nominal)?;
        fraction(&f("motor.drivetrain_efficiency"), m.motor.drivetrain_efficiency, false)?;
        positive(&f("motor.drivetrain_efficiency"), m.motor.drivetrain_efficiency)?;
        if m.motor.no_load_current * m.motor.oil_current_multiplier >= m.motor.current_limit {
            return Err(invalid(f("motor.no_load_current"), "no-load current in oil must be below the current limit"));
        }
        if let Some(p) = m.drop_point {
            if c.uav.is_empty() {
                return Err(invalid(f("drop_point"), "needs at least one UAV to deploy from the bay"));
            }
            check_drop_depth(p, co).map_err(|e| invalid(f("drop_point"), e.to_string()))?;
        }
    }

    for (i, u) in c.uav.iter().enumerate() {
        let f = |name: &str| format!("uav[{i}].{name}");
        positive(&f("power.battery_capacity"), u.power.battery_capacity)?;
        positive(&f("power.cruise_speed"), u.power.cruise_speed)?;
        non_negative(&f("power.cruise_power"), u.power.cruise_power)?;
        non_negative(&f("power.hover_power"), u.power.hover_power)?;
        non_negative(&f("power.recharge_power"), u.power.recharge_power)?;
        if u.power.payload_power_multiplier < 1.0 {
            return Err(invalid(f("power.payload_power_multiplier"), "must be at least 1"));
        }
        charge(&f("initial_charge"), u.initial_charge, u.power.battery_capacity)?;
        non_negative(&f("emergency_floor"), u.emergency_floor)?;
        if u.emergency_floor >= u.power.battery_capacity {
            return Err(invalid(f("emergency_floor"), "must be below battery_capacity"));
        }
        positive(&f("capture_radius"), u.capture_radius)?;
        if u.detection_radius < u.capture_radius {
            return Err(invalid(f("detection_radius"), "must be at least capture_radius"));
        }
        non_negative(&f("pickup_time"), u.pickup_time)?;
        non_negative(&f("deploy_time"), u.deploy_time)?;
        positive(&f("cruise_altitude"), u.cruise_altitude)?;
        positive(&f("relay_altitude"), u.relay_altitude)?;
        positive(&f("deck_height"), u.deck_height)?;
        if u.return_margin < 1.0 {
            return Err(invalid(f("return_margin"), "must be at least 1"));
        }
        positive(&f("status_interval"), u.status_interval)?;
        if u.power.cruise_speed <= c.usv.speed {
            return Err(invalid(f("power.cruise_speed"), "must exceed the surface vessel speed"));
        }
    }

    non_negative("usv.speed", c.usv.speed)?;
    positive("usv.battery_capacity", c.usv.battery_capacity)?;
    charge("usv.initial_charge", c.usv.initial_charge, c.usv.battery_capacity)?;
    non_negative("usv.hotel_power", c.usv.hotel_power)?;
    positive("usv.mast_height", c.usv.mast_height)?;

    for (i, fs) in c.forced_sortie.iter().enumerate() {
        let f = |name: &str| format!("forced_sortie[{i}].{name}");
        non_negative(&f("at"), fs.at)?;
        non_negative(&f("duration"), fs.duration)?;
        if !c.uav.iter().any(|u| u.id == fs.uav) {
            return Err(invalid(f("uav"), format!("no UAV named `{}`", fs.uav)));
        }
        if fs.kind == ForcedKind::Recover {
            match &fs.mug {
                Some(m) if c.mug.iter().any(|g| &g.id == m) => {}
                _ => return Err(invalid(f("mug"), "recover sorties must name a configured glider")),
            }
        }
    }
    Ok(())
}
