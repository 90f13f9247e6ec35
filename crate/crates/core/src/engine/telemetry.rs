//! Line-oriented telemetry. Every line is one JSON object tagged by `row`;
//! the run digest is SHA-256 over the lines, each followed by `\n`.

use super::EventRecord;
use crate::comms::CommEvent;
use crate::ids::{VehicleId, VehicleKind};
use serde::{Deserialize, Serialize};

pub const TELEMETRY_SCHEMA: &str = "mugsim.telemetry";
pub const TELEMETRY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRow {
    pub t: f64,
    pub vehicle: VehicleId,
    pub kind: VehicleKind,
    pub mode: String,
    pub x: f64,
    pub y: f64,
    pub depth: f64,
    pub altitude: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub sigma: f64,
    pub battery_wh: f64,
    pub yo_count: u32,
    pub queue: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "row", rename_all = "snake_case")]
pub enum Row {
    Header {
        schema: String,
        version: u32,
        seed: u64,
        dt: f64,
        duration: f64,
        telemetry_interval: f64,
    },
    Vehicle(VehicleRow),
    Comm {
        t: f64,
        #[serde(flatten)]
        event: CommEvent,
    },
    Plan(EventRecord),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::MsgId;

    #[test]
    fn rows_round_trip() {
        let rows = vec![
            Row::Header {
                schema: TELEMETRY_SCHEMA.into(),
                version: TELEMETRY_VERSION,
                seed: 7,
                dt: 1.0,
                duration: 60.0,
                telemetry_interval: 10.0,
            },
            Row::Comm {
                t: 3.0,
                event: CommEvent::Retransmitted {
                    msg: MsgId { origin: "mug-1".into(), seq: 4 },
                    at: 3.0,
                },
            },
            Row::Plan(EventRecord {
                t: 5.0,
                event: super::super::Event::Fault { message: "x".into() },
            }),
        ];
        for r in rows {
            let line = serde_json::to_string(&r).unwrap();
            let back: Row = serde_json::from_str(&line).unwrap();
            assert_eq!(back, r, "{line}");
        }
    }
}
