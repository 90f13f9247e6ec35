//! Documents that only the gateway sends. Snapshots and updates are the
//! core [`mugsim::sa`] types.

use mugsim::sa::{CommandAck, SimClock};
use serde::{Deserialize, Serialize};

/// Reply to a command sent over the stream socket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckFrame {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(flatten)]
    pub ack: CommandAck,
}

impl AckFrame {
    pub fn new(ack: CommandAck) -> Self {
        Self { kind: "ack".into(), ack }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: &'static str,
    pub schema: &'static str,
    pub version: u32,
    pub clock: SimClock,
}
