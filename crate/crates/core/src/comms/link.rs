use super::{CommsError, RadioNode};
use crate::ids::VehicleId;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Effective-earth (k = 4/3) radio horizon constant, m per √m.
pub const HORIZON_COEFF: f64 = 3570.0;

/// Combined line-of-sight horizon for two antennas, m.
pub fn radio_horizon(h1: f64, h2: f64) -> f64 {
    HORIZON_COEFF * (h1.max(0.0).sqrt() + h2.max(0.0).sqrt())
}

pub fn separation(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub endpoints: (VehicleId, VehicleId),
    pub available: bool,
    pub distance: f64,
    pub horizon: f64,
}

/// Geometric RF availability: both radios on, both antennas above water and
/// within the combined horizon.
pub fn line_of_sight(a: &RadioNode, b: &RadioNode) -> LinkState {
    let distance = separation(a.position, b.position);
    let horizon = radio_horizon(a.antenna_height(), b.antenna_height());
    let available = a.powered
        && b.powered
        && !a.is_submerged()
        && !b.is_submerged()
        && a.antenna_height() > 0.0
        && b.antenna_height() > 0.0
        && distance <= horizon;
    LinkState {
        endpoints: (a.id.clone(), b.id.clone()),
        available,
        distance,
        horizon,
    }
}

/// Per-tick RF link evaluation strategy.
pub trait LinkModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn link(&self, a: &RadioNode, b: &RadioNode, rng: &mut dyn RngCore) -> LinkState;
}

/// Horizon-only propagation.
#[derive(Debug, Default, Clone, Copy)]
pub struct HorizonLink;

impl LinkModel for HorizonLink {
    fn name(&self) -> &'static str {
        "horizon"
    }

    fn link(&self, a: &RadioNode, b: &RadioNode, _rng: &mut dyn RngCore) -> LinkState {
        line_of_sight(a, b)
    }
}

/// Horizon propagation with independent Bernoulli dropout of each
/// geometrically available link. One uniform draw per available link.
#[derive(Debug, Clone, Copy)]
pub struct DropoutLink {
    pub probability: f64,
}

impl LinkModel for DropoutLink {
    fn name(&self) -> &'static str {
        "horizon-dropout"
    }

    fn link(&self, a: &RadioNode, b: &RadioNode, rng: &mut dyn RngCore) -> LinkState {
        let mut state = line_of_sight(a, b);
        if state.available {
            let u: f64 = rng.random();
            if u < self.probability {
                state.available = false;
            }
        }
        state
    }
}

/// Link availability for every unordered node pair during one tick.
#[derive(Debug, Clone, Default)]
pub struct LinkTable {
    index: BTreeMap<VehicleId, usize>,
    /// Upper triangle in ascending pair order.
    links: Vec<LinkState>,
}

impl LinkTable {
    /// Evaluate all pairs in ascending id order (this fixes the RNG draw order).
    pub fn evaluate(
        nodes: &BTreeMap<VehicleId, RadioNode>,
        model: &dyn LinkModel,
        rng: &mut dyn RngCore,
    ) -> Self {
        let ordered: Vec<&RadioNode> = nodes.values().collect();
        let n = ordered.len();
        let mut links = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for (i, a) in ordered.iter().enumerate() {
            for b in &ordered[i + 1..] {
                links.push(model.link(a, b, rng));
            }
        }
        let index = ordered.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        Self { index, links }
    }

    fn slot(&self, a: &VehicleId, b: &VehicleId) -> Option<usize> {
        let (i, j) = (*self.index.get(a)?, *self.index.get(b)?);
        let (i, j) = match i.cmp(&j) {
            std::cmp::Ordering::Less => (i, j),
            std::cmp::Ordering::Greater => (j, i),
            std::cmp::Ordering::Equal => return None,
        };
        let n = self.index.len();
        // rows before i hold (n-1) + (n-2) + ... + (n-i) pairs
        Some(i * (2 * n - i - 1) / 2 + (j - i - 1))
    }

    pub fn available(&self, a: &VehicleId, b: &VehicleId) -> bool {
        self.get(a, b).is_some_and(|l| l.available)
    }

    pub fn get(&self, a: &VehicleId, b: &VehicleId) -> Option<&LinkState> {
        self.slot(a, b).map(|k| &self.links[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = &LinkState> {
        self.links.iter()
    }
}

/// Availability of a single pair from a node map.
pub fn link_available(
    nodes: &BTreeMap<VehicleId, RadioNode>,
    a: &VehicleId,
    b: &VehicleId,
    model: &dyn LinkModel,
    rng: &mut dyn RngCore,
) -> Result<LinkState, CommsError> {
    let na = nodes
        .get(a)
        .ok_or_else(|| CommsError::UnknownNode(a.clone()))?;
    let nb = nodes
        .get(b)
        .ok_or_else(|| CommsError::UnknownNode(b.clone()))?;
    Ok(model.link(na, nb, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcousticConfig {
    pub range: f64,
    pub sound_speed: f64,
    pub max_payload: u32,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        Self {
            range: 300.0,
            sound_speed: 1500.0,
            max_payload: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcousticOutcome {
    pub delivered: bool,
    pub latency_ticks: u64,
}

/// Short-range acoustic command delivery. Depth does not matter, only the
/// 3-D distance between two acoustically equipped nodes.
pub fn acoustic_command(
    sender: &RadioNode,
    receiver: &RadioNode,
    payload_size: u32,
    dt: f64,
    cfg: &AcousticConfig,
) -> Result<AcousticOutcome, CommsError> {
    if payload_size > cfg.max_payload {
        return Err(CommsError::OversizedAcoustic {
            size: payload_size,
            max: cfg.max_payload,
        });
    }
    let distance = separation(sender.position, receiver.position);
    let delivered = sender.acoustic && receiver.acoustic && distance <= cfg.range;
    let travel = distance / cfg.sound_speed;
    let latency_ticks = ((travel / dt).ceil() as u64).max(1);
    Ok(AcousticOutcome {
        delivered,
        latency_ticks,
    })
}
