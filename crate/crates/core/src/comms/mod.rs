//! Radio and acoustic networking between vehicles.
//!
//! RF links exist only between surfaced or airborne antennas within the
//! combined radio horizon. Messages move at most one hop per tick, limited by
//! the link bandwidth, and are routed either directly, through a single
//! intermediate that currently reaches the destination, or handed to an
//! aerial carrier that stores them until it meets the destination.
//! Telemetry originators keep a copy until an ack comes back and retransmit
//! after a timeout; destinations suppress duplicates by message id.

mod link;
mod message;
mod oracle;

pub use link::{
    acoustic_command, line_of_sight, link_available, radio_horizon, separation, AcousticConfig,
    AcousticOutcome, DropoutLink, HorizonLink, LinkModel, LinkState, LinkTable, HORIZON_COEFF,
};
pub use message::{
    CommandEnvelope, Message, MessageKind, MsgId, Payload, StatusReport, VehicleCommand,
};
pub use oracle::connectivity_oracle;

use crate::ids::VehicleId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CommsError {
    #[error("unknown radio node `{0}`")]
    UnknownNode(VehicleId),
    #[error("duplicate radio node `{0}`")]
    DuplicateNode(VehicleId),
    #[error("acoustic payload of {size} bytes exceeds the {max}-byte command limit")]
    OversizedAcoustic { size: u32, max: u32 },
    #[error("message of {size} bytes can never fit the {budget}-byte per-tick link budget")]
    OversizedMessage { size: u32, budget: f64 },
    #[error(
        "message conservation violated: created {created} != delivered {delivered} + in flight {in_flight} + dropped {dropped}"
    )]
    Conservation {
        created: u64,
        delivered: usize,
        in_flight: usize,
        dropped: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Glider,
    /// Aerial nodes also act as store-and-forward carriers.
    Aerial,
    Surface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommsConfig {
    /// Registered name of the link model.
    pub link_model: String,
    pub dropout_probability: f64,
    /// Default node bandwidth, bytes/s.
    pub bandwidth: f64,
    pub frequency: f64,
    pub queue_capacity: usize,
    pub retransmit_timeout: f64,
    /// Latency of the surface vessel's shore uplink, s.
    pub uplink_latency: f64,
    pub acoustic: AcousticConfig,
}

impl Default for CommsConfig {
    fn default() -> Self {
        Self {
            link_model: "horizon".into(),
            dropout_probability: 0.0,
            bandwidth: 2400.0,
            frequency: 433e6,
            queue_capacity: 10_000,
            retransmit_timeout: 6.0 * 3600.0,
            uplink_latency: 60.0,
            acoustic: AcousticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingAck {
    pub message: Message,
    pub retransmit_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioNode {
    pub id: VehicleId,
    pub role: NodeRole,
    /// East, north, and height of the antenna above the sea surface
    /// (negative when submerged).
    pub position: [f64; 3],
    pub frequency: f64,
    pub bandwidth: f64,
    pub powered: bool,
    pub acoustic: bool,
    pub queue: VecDeque<Message>,
    pub awaiting_ack: BTreeMap<MsgId, PendingAck>,
    pub next_seq: u64,
    pub received: BTreeSet<MsgId>,
    pub inbox: Vec<Message>,
}

impl RadioNode {
    pub fn new(id: VehicleId, role: NodeRole) -> Self {
        Self {
            id,
            role,
            position: [0.0, 0.0, 0.0],
            frequency: 433e6,
            bandwidth: 2400.0,
            powered: true,
            acoustic: matches!(role, NodeRole::Glider | NodeRole::Surface),
            queue: VecDeque::new(),
            awaiting_ack: BTreeMap::new(),
            next_seq: 0,
            received: BTreeSet::new(),
            inbox: Vec::new(),
        }
    }

    pub fn antenna_height(&self) -> f64 {
        self.position[2].max(0.0)
    }

    pub fn is_submerged(&self) -> bool {
        self.position[2] < 0.0
    }

    pub fn queue_bytes(&self) -> u64 {
        self.queue.iter().map(|m| m.payload_size as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum CommEvent {
    Transferred {
        msg: MsgId,
        from: VehicleId,
        to: VehicleId,
        bytes: u32,
        at: f64,
    },
    Delivered {
        msg: MsgId,
        kind: MessageKind,
        hops: Vec<VehicleId>,
        created_at: f64,
        at: f64,
    },
    Dropped {
        msg: MsgId,
        node: VehicleId,
        unrecoverable: bool,
        at: f64,
    },
    DuplicateSuppressed {
        msg: MsgId,
        node: VehicleId,
        at: f64,
    },
    Retransmitted {
        msg: MsgId,
        at: f64,
    },
}

/// Message accounting over unique message ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommsLedger {
    pub created: u64,
    pub delivered: BTreeSet<MsgId>,
    pub dropped: BTreeSet<MsgId>,
    pub duplicates_suppressed: u64,
    pub bytes_transferred: u64,
}

/// All radio nodes and their queues.
#[derive(Debug, Clone)]
pub struct Network {
    pub nodes: BTreeMap<VehicleId, RadioNode>,
    pub ledger: CommsLedger,
    pub config: CommsConfig,
    dt: f64,
}

impl Network {
    pub fn new(config: CommsConfig, dt: f64) -> Self {
        Self {
            nodes: BTreeMap::new(),
            ledger: CommsLedger::default(),
            config,
            dt,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn add_node(&mut self, node: RadioNode) -> Result<(), CommsError> {
        if self.nodes.contains_key(&node.id) {
            return Err(CommsError::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn node(&self, id: &VehicleId) -> Result<&RadioNode, CommsError> {
        self.nodes
            .get(id)
            .ok_or_else(|| CommsError::UnknownNode(id.clone()))
    }

    pub fn node_mut(&mut self, id: &VehicleId) -> Result<&mut RadioNode, CommsError> {
        self.nodes
            .get_mut(id)
            .ok_or_else(|| CommsError::UnknownNode(id.clone()))
    }

    fn link_budget(&self, a: &VehicleId, b: &VehicleId) -> f64 {
        let bw = |id: &VehicleId| self.nodes.get(id).map(|n| n.bandwidth).unwrap_or(0.0);
        bw(a).min(bw(b)) * self.dt
    }

    /// Create a message at `origin` and queue it there.
    pub fn originate(
        &mut self,
        origin: &VehicleId,
        destination: &VehicleId,
        payload: Payload,
        now: f64,
    ) -> Result<(MsgId, Vec<CommEvent>), CommsError> {
        let size = payload.wire_size();
        let node = self.node(origin)?;
        let budget = node.bandwidth * self.dt;
        if size as f64 > budget {
            return Err(CommsError::OversizedMessage { size, budget });
        }
        let node = self.node_mut(origin)?;
        let id = MsgId {
            origin: origin.clone(),
            seq: node.next_seq,
        };
        node.next_seq += 1;
        let msg = Message {
            id: id.clone(),
            kind: payload.kind(),
            destination: destination.clone(),
            payload_size: size,
            created_at: now,
            hops: vec![origin.clone()],
            delivered_at: None,
            enqueued_at: now,
            payload,
        };
        node.queue.push_back(msg);
        self.ledger.created += 1;
        let mut events = Vec::new();
        self.enforce_capacity(origin, now, &mut events);
        Ok((id, events))
    }

    pub fn queued(&self, id: &VehicleId) -> usize {
        self.nodes.get(id).map(|n| n.queue.len()).unwrap_or(0)
    }

    pub fn drain_inbox(&mut self, id: &VehicleId) -> Vec<Message> {
        self.nodes
            .get_mut(id)
            .map(|n| std::mem::take(&mut n.inbox))
            .unwrap_or_default()
    }

    fn copy_exists(&self, id: &MsgId) -> bool {
        self.nodes.values().any(|n| {
            n.awaiting_ack.contains_key(id) || n.queue.iter().any(|m| &m.id == id)
        })
    }

    fn enforce_capacity(&mut self, node_id: &VehicleId, now: f64, events: &mut Vec<CommEvent>) {
        let cap = self.config.queue_capacity;
        loop {
            let Some(node) = self.nodes.get_mut(node_id) else {
                return;
            };
            if node.queue.len() <= cap {
                return;
            }
            let Some(oldest) = node.queue.pop_front() else {
                return;
            };
            let unrecoverable =
                !self.ledger.delivered.contains(&oldest.id) && !self.copy_exists(&oldest.id);
            if unrecoverable {
                self.ledger.dropped.insert(oldest.id.clone());
            }
            events.push(CommEvent::Dropped {
                msg: oldest.id,
                node: node_id.clone(),
                unrecoverable,
                at: now,
            });
        }
    }

    fn next_hop(
        &self,
        holder: &VehicleId,
        msg: &Message,
        links: &LinkTable,
    ) -> Option<VehicleId> {
        let dest = &msg.destination;
        if links.available(holder, dest) {
            return Some(dest.clone());
        }
        if msg.hops.len() > 1 {
            return None;
        }
        let relay = self.nodes.keys().find(|r| {
            *r != holder && *r != dest && links.available(holder, r) && links.available(r, dest)
        });
        if let Some(r) = relay {
            return Some(r.clone());
        }
        self.nodes
            .values()
            .find(|n| {
                n.role == NodeRole::Aerial
                    && &n.id != holder
                    && &n.id != dest
                    && links.available(holder, &n.id)
            })
            .map(|n| n.id.clone())
    }

    /// Advance all queues by one tick over the given link table.
    pub fn step(&mut self, links: &LinkTable, now: f64) -> Vec<CommEvent> {
        let mut events = Vec::new();
        self.retransmit_due(now, &mut events);

        let ids: Vec<VehicleId> = self.nodes.keys().cloned().collect();
        let mut budgets: BTreeMap<(VehicleId, VehicleId), f64> = BTreeMap::new();
        let mut arrivals: Vec<(VehicleId, Message)> = Vec::new();

        for id in &ids {
            let queue = std::mem::take(&mut self.nodes.get_mut(id).expect("listed").queue);
            let mut keep = VecDeque::with_capacity(queue.len());
            let mut blocked: BTreeSet<VehicleId> = BTreeSet::new();
            let mut retained: Vec<Message> = Vec::new();
            // routing depends only on destination and whether the copy was relayed
            let mut routes: Vec<(VehicleId, bool, Option<VehicleId>)> = Vec::new();
            for msg in queue {
                let relayed = msg.hops.len() > 1;
                let route = match routes.iter().find(|(d, r, _)| *d == msg.destination && *r == relayed) {
                    Some((_, _, hop)) => hop.clone(),
                    None => {
                        let hop = self.next_hop(id, &msg, links);
                        routes.push((msg.destination.clone(), relayed, hop.clone()));
                        hop
                    }
                };
                let Some(next) = route else {
                    keep.push_back(msg);
                    continue;
                };
                if blocked.contains(&next) {
                    keep.push_back(msg);
                    continue;
                }
                let k = if *id <= next {
                    (id.clone(), next.clone())
                } else {
                    (next.clone(), id.clone())
                };
                let budget = self.link_budget(id, &next);
                let remaining = budgets.entry(k).or_insert(budget);
                if (msg.payload_size as f64) > *remaining {
                    blocked.insert(next);
                    keep.push_back(msg);
                    continue;
                }
                *remaining -= msg.payload_size as f64;
                self.ledger.bytes_transferred += msg.payload_size as u64;
                if msg.kind == MessageKind::Telemetry && msg.hops.len() == 1 {
                    retained.push(msg.clone());
                }
                events.push(CommEvent::Transferred {
                    msg: msg.id.clone(),
                    from: id.clone(),
                    to: next.clone(),
                    bytes: msg.payload_size,
                    at: now,
                });
                arrivals.push((next, msg));
            }
            let timeout = self.config.retransmit_timeout;
            let node = self.nodes.get_mut(id).expect("listed");
            node.queue = keep;
            for msg in retained {
                node.awaiting_ack
                    .entry(msg.id.clone())
                    .or_insert(PendingAck {
                        message: msg,
                        retransmit_at: now + timeout,
                    });
            }
        }

        let mut touched: BTreeSet<VehicleId> = BTreeSet::new();
        for (to, mut msg) in arrivals {
            msg.hops.push(to.clone());
            if to == msg.destination {
                self.deliver(&to, msg, now, &mut events);
            } else if let Some(node) = self.nodes.get_mut(&to) {
                if node.queue.iter().any(|m| m.id == msg.id) {
                    continue;
                }
                msg.enqueued_at = now;
                node.queue.push_back(msg);
            }
            touched.insert(to);
        }
        for id in touched {
            self.enforce_capacity(&id, now, &mut events);
        }
        events
    }

    fn deliver(&mut self, to: &VehicleId, mut msg: Message, now: f64, events: &mut Vec<CommEvent>) {
        let Some(node) = self.nodes.get_mut(to) else {
            return;
        };
        let fresh = node.received.insert(msg.id.clone());
        if !fresh {
            self.ledger.duplicates_suppressed += 1;
            events.push(CommEvent::DuplicateSuppressed {
                msg: msg.id.clone(),
                node: to.clone(),
                at: now,
            });
        } else {
            msg.delivered_at = Some(now);
            self.ledger.delivered.insert(msg.id.clone());
            events.push(CommEvent::Delivered {
                msg: msg.id.clone(),
                kind: msg.kind,
                hops: msg.hops.clone(),
                created_at: msg.created_at,
                at: now,
            });
            if let Payload::Ack { of } = &msg.payload {
                node.awaiting_ack.remove(of);
            }
            node.inbox.push(msg.clone());
        }
        if msg.kind == MessageKind::Telemetry {
            let ack = Payload::Ack { of: msg.id.clone() };
            let (_, mut evs) = self
                .originate(to, &msg.id.origin, ack, now)
                .expect("ack fits any link budget");
            events.append(&mut evs);
        }
    }

    fn retransmit_due(&mut self, now: f64, events: &mut Vec<CommEvent>) {
        let timeout = self.config.retransmit_timeout;
        let ids: Vec<VehicleId> = self.nodes.keys().cloned().collect();
        for id in ids {
            let node = self.nodes.get_mut(&id).expect("listed");
            let mut requeue = Vec::new();
            for (mid, pending) in node.awaiting_ack.iter_mut() {
                if pending.retransmit_at > now {
                    continue;
                }
                pending.retransmit_at = now + timeout;
                if node.queue.iter().any(|m| &m.id == mid) {
                    continue;
                }
                let mut copy = pending.message.clone();
                copy.hops.truncate(1);
                copy.enqueued_at = now;
                requeue.push(copy);
            }
            for copy in requeue {
                events.push(CommEvent::Retransmitted {
                    msg: copy.id.clone(),
                    at: now,
                });
                node.queue.push_back(copy);
            }
            self.enforce_capacity(&id, now, events);
        }
    }

    /// Unique ids currently held somewhere and not yet delivered.
    pub fn in_flight(&self) -> BTreeSet<MsgId> {
        let mut ids = BTreeSet::new();
        for n in self.nodes.values() {
            ids.extend(n.queue.iter().map(|m| m.id.clone()));
            ids.extend(n.awaiting_ack.keys().cloned());
        }
        ids.retain(|id| !self.ledger.delivered.contains(id));
        ids
    }

    /// created = delivered + in flight + dropped.
    pub fn check_conservation(&self) -> Result<(), CommsError> {
        let in_flight = self.in_flight().len();
        let delivered = self.ledger.delivered.len();
        let dropped = self.ledger.dropped.len();
        if self.ledger.created != (delivered + in_flight + dropped) as u64 {
            return Err(CommsError::Conservation {
                created: self.ledger.created,
                delivered,
                in_flight,
                dropped,
            });
        }
        Ok(())
    }
}

/// One tick of store-and-forward networking.
pub fn comms_step(network: &mut Network, links: &LinkTable, now: f64) -> Vec<CommEvent> {
    network.step(links, now)
}
