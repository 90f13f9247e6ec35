use serde::{Deserialize, Serialize};

/// Fleet-wide energy bookkeeping, Wh. Dock charging moves energy between
/// stores and appears only in `transferred`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    pub initial_total: f64,
    pub harvested: f64,
    pub consumed: f64,
    pub curtailed: f64,
    pub unserved: f64,
    pub transferred: f64,
}

impl EnergyAudit {
    /// Stored change minus the net of all sources and sinks.
    pub fn residual(&self, total_charge: f64) -> f64 {
        (total_charge - self.initial_total)
            - (self.harvested - self.consumed - self.curtailed + self.unserved)
    }

    /// Magnitude the residual is judged against.
    pub fn scale(&self) -> f64 {
        self.initial_total.max(self.harvested + self.consumed).max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closes_on_hand_computed_books() {
        let a = EnergyAudit {
            initial_total: 1000.0,
            harvested: 300.0,
            consumed: 120.0,
            curtailed: 20.0,
            unserved: 5.0,
            transferred: 77.0,
        };
        assert!(a.residual(1165.0).abs() < 1e-12);
        assert!((a.residual(1166.0) - 1.0).abs() < 1e-12);
    }
}
