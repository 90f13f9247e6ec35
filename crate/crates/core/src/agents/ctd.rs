use serde::{Deserialize, Serialize};

/// Piecewise-linear temperature and conductivity versus depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtdProfile {
    /// (depth m, temperature °C), sorted by depth.
    pub temperature: Vec<[f64; 2]>,
    /// (depth m, conductivity S/m), sorted by depth.
    pub conductivity: Vec<[f64; 2]>,
}

impl Default for CtdProfile {
    fn default() -> Self {
        Self {
            temperature: vec![[0.0, 12.0], [30.0, 11.0], [80.0, 8.0], [200.0, 7.0]],
            conductivity: vec![[0.0, 3.80], [80.0, 3.55], [200.0, 3.50]],
        }
    }
}

fn interp(table: &[[f64; 2]], depth: f64) -> f64 {
    match table {
        [] => f64::NAN,
        [only] => only[1],
        _ => {
            if depth <= table[0][0] {
                return table[0][1];
            }
            for w in table.windows(2) {
                let (a, b) = (w[0], w[1]);
                if depth <= b[0] {
                    let t = (depth - a[0]) / (b[0] - a[0]);
                    return a[1] + t * (b[1] - a[1]);
                }
            }
            table[table.len() - 1][1]
        }
    }
}

impl CtdProfile {
    pub fn temperature_at(&self, depth: f64) -> f64 {
        interp(&self.temperature, depth)
    }

    pub fn conductivity_at(&self, depth: f64) -> f64 {
        interp(&self.conductivity, depth)
    }

    pub fn is_sorted(&self) -> bool {
        let sorted = |t: &[[f64; 2]]| !t.is_empty() && t.windows(2).all(|w| w[0][0] < w[1][0]);
        sorted(&self.temperature) && sorted(&self.conductivity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtdSample {
    pub time: f64,
    pub depth: f64,
    pub conductivity: f64,
    pub temperature: f64,
    pub position_estimate: [f64; 2],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_and_clamping() {
        let p = CtdProfile::default();
        assert_eq!(p.temperature_at(0.0), 12.0);
        assert!((p.temperature_at(15.0) - 11.5).abs() < 1e-12);
        assert_eq!(p.temperature_at(500.0), 7.0);
        assert!(p.is_sorted());
    }
}
