//! Hydrostatics, buoyancy-engine force mapping and vertical dynamics of the glider.
//!
//! Conventions used throughout the crate:
//!
//! - depth is positive down, vertical velocity is positive down;
//! - horizontal positions are local east/north metres;
//! - forces returned by [`net_buoyant_force`] are positive up.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("depth must be non-negative, got {0} m")]
    NegativeDepth(f64),
    #[error("time step must be in (0, {max}] s, got {dt}")]
    BadTimeStep { dt: f64, max: f64 },
    #[error("pitch {0} rad exceeds the 45 degree glide envelope")]
    PitchOutOfRange(f64),
    #[error("glide ratio must be non-negative, got {0}")]
    NegativeGlideRatio(f64),
}

/// Largest step accepted by [`vertical_step`].
pub const MAX_DT: f64 = 10.0;

/// Horizontal water velocity, optionally decaying exponentially with depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurrentField {
    /// Surface velocity, east/north m/s.
    pub surface: [f64; 2],
    /// e-folding depth of the current; `None` means depth-uniform.
    pub decay_depth: Option<f64>,
}

impl Default for CurrentField {
    fn default() -> Self {
        Self {
            surface: [0.0, 0.0],
            decay_depth: None,
        }
    }
}

impl CurrentField {
    pub fn uniform(east: f64, north: f64) -> Self {
        Self {
            surface: [east, north],
            decay_depth: None,
        }
    }

    /// Velocity at `depth`. The field is horizontally homogeneous.
    pub fn velocity(&self, _position: [f64; 2], depth: f64) -> [f64; 2] {
        let scale = match self.decay_depth {
            Some(d) if d > 0.0 => (-depth.max(0.0) / d).exp(),
            _ => 1.0,
        };
        [self.surface[0] * scale, self.surface[1] * scale]
    }

    /// Largest speed anywhere in the field (attained at the surface).
    pub fn max_speed(&self) -> f64 {
        self.surface[0].hypot(self.surface[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Environment {
    pub water_density: f64,
    pub gravity: f64,
    pub surface_pressure: f64,
    pub current: CurrentField,
    pub max_current: f64,
    /// Peak solar power available to the surface vessel, W.
    pub solar_peak: f64,
    pub day_length: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            water_density: 1025.0,
            gravity: 9.81,
            surface_pressure: 101_325.0,
            current: CurrentField::default(),
            max_current: 0.5,
            solar_peak: 50.0,
            day_length: 86_400.0,
        }
    }
}

/// Rigid-body parameters of the glider hull.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MugBody {
    pub mass: f64,
    /// Displacement at the neutral piston position. Calibrated by [`trim_hull_volume`].
    pub hull_volume: f64,
    pub frontal_area: f64,
    pub drag_coefficient: f64,
    pub length: f64,
    pub diameter: f64,
    /// Added mass as a fraction of dry mass.
    pub added_mass_factor: f64,
}

impl Default for MugBody {
    fn default() -> Self {
        let diameter = 0.07;
        let mass = 2.6;
        Self {
            mass,
            hull_volume: mass / Environment::default().water_density,
            frontal_area: PI * (diameter / 2.0) * (diameter / 2.0),
            drag_coefficient: 1.0,
            length: 0.56,
            diameter,
            added_mass_factor: 0.1,
        }
    }
}

impl MugBody {
    pub fn effective_mass(&self) -> f64 {
        self.mass * (1.0 + self.added_mass_factor)
    }
}

/// Piston state of the variable buoyancy system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VbsState {
    /// 0 = fully retracted (minimum volume), 1 = fully extended.
    pub piston_fraction: f64,
    /// Signed rate of the last commanded motion, fraction/s.
    pub piston_rate: f64,
    pub max_displaced_volume: f64,
    pub stroke_length: f64,
    pub piston_area: f64,
}

impl Default for VbsState {
    fn default() -> Self {
        Self {
            piston_fraction: 0.5,
            piston_rate: 0.0,
            max_displaced_volume: 100e-6,
            stroke_length: 0.20,
            piston_area: 5.0e-4,
        }
    }
}

impl VbsState {
    /// Relative mismatch between swept geometry and rated volume.
    pub fn geometry_mismatch(&self) -> f64 {
        let swept = self.piston_area * self.stroke_length;
        (swept - self.max_displaced_volume).abs() / self.max_displaced_volume
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MugKinematics {
    pub depth: f64,
    pub vertical_velocity: f64,
    pub position: [f64; 2],
    pub horizontal_velocity: [f64; 2],
    pub pitch: f64,
}

impl MugKinematics {
    pub fn at_surface(position: [f64; 2]) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }

    pub fn is_submerged(&self) -> bool {
        self.depth > 0.0
    }
}

/// Absolute pressure at `depth`, Pa.
pub fn hydrostatic_pressure(depth: f64, env: &Environment) -> Result<f64, PhysicsError> {
    Ok(env.surface_pressure + gauge_pressure(depth, env)?)
}

/// Pressure above ambient surface pressure, Pa.
pub fn gauge_pressure(depth: f64, env: &Environment) -> Result<f64, PhysicsError> {
    if depth < 0.0 || depth.is_nan() {
        return Err(PhysicsError::NegativeDepth(depth));
    }
    Ok(env.water_density * env.gravity * depth)
}

/// Hull displacement that makes the vehicle neutral at `neutral_fraction`.
///
/// The piston term vanishes at the trim point, so the displacement is simply
/// mass over density; the external geometry is not used.
pub fn trim_hull_volume(body: &MugBody, env: &Environment) -> f64 {
    body.mass / env.water_density
}

/// Net vertical force on the vehicle, positive up.
pub fn net_buoyant_force(
    vbs: &VbsState,
    body: &MugBody,
    env: &Environment,
    neutral_fraction: f64,
) -> f64 {
    let displaced =
        body.hull_volume + (vbs.piston_fraction - neutral_fraction) * vbs.max_displaced_volume;
    env.water_density * env.gravity * displaced - body.mass * env.gravity
}

/// Steady sink/rise speed for a constant net force, m/s (magnitude).
pub fn terminal_speed(force: f64, body: &MugBody, env: &Environment) -> f64 {
    (2.0 * force.abs() / (env.water_density * body.drag_coefficient * body.frontal_area)).sqrt()
}

/// Advance vertical motion by one step.
///
/// Buoyancy is applied explicitly and quadratic drag is linearised about the
/// current speed and treated implicitly, which keeps the update stable for
/// every step up to [`MAX_DT`] while preserving the steady-state balance
/// `force = ½ρCdA·v|v|`. Surfacing clamps depth to zero and absorbs the
/// vertical momentum.
pub fn vertical_step(
    kin: &MugKinematics,
    force_up: f64,
    body: &MugBody,
    env: &Environment,
    dt: f64,
) -> Result<MugKinematics, PhysicsError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(PhysicsError::BadTimeStep { dt, max: MAX_DT });
    }
    let m = body.effective_mass();
    let drag_k = 0.5 * env.water_density * body.drag_coefficient * body.frontal_area / m;
    let v = kin.vertical_velocity;
    let mut v_next = (v + dt * (-force_up / m)) / (1.0 + dt * drag_k * v.abs());
    let mut depth = kin.depth + dt * v_next;
    if depth <= 0.0 {
        depth = 0.0;
        v_next = 0.0;
    }
    Ok(MugKinematics {
        depth,
        vertical_velocity: v_next,
        ..*kin
    })
}

/// Horizontal motion for one step: optional steady glide along `heading`
/// (radians clockwise from north) plus advection by the ambient current.
pub fn glide_step(
    kin: &MugKinematics,
    pitch: f64,
    glide_ratio: f64,
    heading: f64,
    env: &Environment,
    dt: f64,
) -> Result<MugKinematics, PhysicsError> {
    if pitch.abs() > PI / 4.0 + 1e-12 {
        return Err(PhysicsError::PitchOutOfRange(pitch));
    }
    if glide_ratio < 0.0 {
        return Err(PhysicsError::NegativeGlideRatio(glide_ratio));
    }
    let speed = glide_ratio * kin.vertical_velocity.abs();
    let glide = [speed * heading.sin(), speed * heading.cos()];
    let current = env.current.velocity(kin.position, kin.depth);
    let vel = [glide[0] + current[0], glide[1] + current[1]];
    Ok(MugKinematics {
        position: [kin.position[0] + vel[0] * dt, kin.position[1] + vel[1] * dt],
        horizontal_velocity: vel,
        pitch,
        ..*kin
    })
}
