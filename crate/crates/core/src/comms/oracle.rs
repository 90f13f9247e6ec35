use super::{line_of_sight, RadioNode};
use crate::ids::VehicleId;
use std::collections::{BTreeMap, BTreeSet};

/// Brute force: every ordered pair that is connected directly or through
/// exactly one intermediate, using geometric availability only.
pub fn connectivity_oracle(
    nodes: &BTreeMap<VehicleId, RadioNode>,
) -> BTreeSet<(VehicleId, VehicleId)> {
    let list: Vec<&RadioNode> = nodes.values().collect();
    let n = list.len();
    let mut direct = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                direct[i][j] = line_of_sight(list[i], list[j]).available;
            }
        }
    }
    let mut out = BTreeSet::new();
    for s in 0..n {
        for d in 0..n {
            if s == d {
                continue;
            }
            let reachable = direct[s][d] || (0..n).any(|r| r != s && r != d && direct[s][r] && direct[r][d]);
            if reachable {
                out.insert((list[s].id.clone(), list[d].id.clone()));
            }
        }
    }
    out
}
