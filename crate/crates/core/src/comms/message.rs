use crate::ids::{VehicleId, VehicleKind};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Globally unique message identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MsgId {
    pub origin: VehicleId,
    pub seq: u64,
}

impl fmt::Display for MsgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.origin, self.seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Telemetry,
    Command,
    Ack,
}

/// Vehicle state as reported over the radio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub vehicle: VehicleId,
    pub kind: VehicleKind,
    pub mode: String,
    /// Position estimate (the vehicle's own belief), east/north m.
    pub position: [f64; 2],
    pub depth: f64,
    pub altitude: f64,
    /// Radial position uncertainty, m.
    pub sigma: f64,
    pub battery_wh: f64,
    pub yo_count: u32,
    pub task: Option<String>,
    /// Time the state was sampled on board.
    pub sampled_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VehicleCommand {
    SetTargetDepth { depth: f64 },
    RequestRecovery,
    AbortSortie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEnvelope {
    pub command_id: String,
    pub command: VehicleCommand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Status(StatusReport),
    CtdBatch { samples: u32, first: f64, last: f64 },
    Command(CommandEnvelope),
    Ack { of: MsgId },
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::Status(_) | Payload::CtdBatch { .. } => MessageKind::Telemetry,
            Payload::Command(_) => MessageKind::Command,
            Payload::Ack { .. } => MessageKind::Ack,
        }
    }

    /// Encoded size on the radio, bytes.
    pub fn wire_size(&self) -> u32 {
        match self {
            Payload::Status(_) => 48,
            Payload::CtdBatch { samples, .. } => 16 + 16 * samples,
            Payload::Command(_) => 16,
            Payload::Ack { .. } => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub id: MsgId,
    pub kind: MessageKind,
    pub destination: VehicleId,
    pub payload_size: u32,
    pub created_at: f64,
    /// Nodes that held the message, starting with the origin.
    pub hops: Vec<VehicleId>,
    pub delivered_at: Option<f64>,
    /// Time the message entered the queue it currently sits in.
    pub enqueued_at: f64,
    pub payload: Payload,
}

impl Message {
    pub fn holder(&self) -> &VehicleId {
        self.hops.last().expect("hops starts with origin")
    }
}
