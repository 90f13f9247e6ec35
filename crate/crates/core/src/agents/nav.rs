use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavConfig {
    /// Per-axis standard deviation of a GPS fix, m.
    pub gps_noise: f64,
    /// Growth of the radial uncertainty while submerged, m per hour.
    pub drift_rate: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            gps_noise: 5.0,
            drift_rate: 50.0,
        }
    }
}

/// Position belief: a point estimate plus a radial uncertainty proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavEstimate {
    pub position: [f64; 2],
    pub sigma: f64,
}

/// Dead reckoning without odometry: the estimate stays put and only the
/// uncertainty grows.
pub fn dead_reckon_update(nav: &NavEstimate, dt: f64, cfg: &NavConfig) -> NavEstimate {
    NavEstimate {
        position: nav.position,
        sigma: nav.sigma + cfg.drift_rate * dt.max(0.0) / 3600.0,
    }
}

/// Surface fix. Draws two normal variates, east then north.
pub fn gps_fix(truth: [f64; 2], cfg: &NavConfig, rng: &mut dyn RngCore) -> NavEstimate {
    let (dx, dy) = if cfg.gps_noise > 0.0 {
        let n = Normal::new(0.0, cfg.gps_noise).expect("positive noise");
        (n.sample(rng), n.sample(rng))
    } else {
        (0.0, 0.0)
    };
    NavEstimate {
        position: [truth[0] + dx, truth[1] + dy],
        sigma: cfg.gps_noise,
    }
}
