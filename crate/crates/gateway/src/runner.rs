//! The paced engine thread and the state it shares with readers.
//!
//! The runner owns the [`World`]. Between ticks it drains a mailbox of
//! operator commands, then publishes a whole-tick snapshot together with
//! the update that leads to it. Readers never see a half-stepped world.

use mugsim::engine::World;
use mugsim::sa::{diff, CommandAck, OperatorCommand, Snapshot, Update};
use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};
use tokio::sync::{broadcast, oneshot, watch};

use crate::GatewayConfig;

/// An update as sent on the wire, serialized once for every subscriber.
#[derive(Debug)]
pub struct Frame {
    /// Publication counter; the snapshot a subscriber starts from carries
    /// the same counter, so older frames can be skipped.
    pub seq: u64,
    pub update: Update,
    pub text: String,
}

struct Published {
    seq: u64,
    snapshot: Arc<Snapshot>,
}

struct Shared {
    published: RwLock<Published>,
    frames: broadcast::Sender<Arc<Frame>>,
    stop: AtomicBool,
    closing: watch::Sender<bool>,
}

struct Request {
    command: OperatorCommand,
    reply: oneshot::Sender<CommandAck>,
}

/// Cheap, cloneable access to a running simulation.
#[derive(Clone)]
pub struct Handle {
    shared: Arc<Shared>,
    mailbox: mpsc::Sender<Request>,
}

/// Subscription point for a new stream client.
pub struct Subscription {
    pub seq: u64,
    pub snapshot: Arc<Snapshot>,
    pub frames: broadcast::Receiver<Arc<Frame>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunnerGone;

impl Handle {
    /// The latest whole-tick snapshot.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.shared.published.read().expect("runner lock").snapshot.clone()
    }

    /// Snapshot and frame receiver taken together: every frame after the
    /// returned `seq` will arrive on the receiver.
    pub fn subscribe(&self) -> Subscription {
        let p = self.shared.published.read().expect("runner lock");
        Subscription {
            seq: p.seq,
            snapshot: p.snapshot.clone(),
            frames: self.shared.frames.subscribe(),
        }
    }

    /// Queue a command for the next between-tick window and wait for its ack.
    pub async fn submit(&self, command: OperatorCommand) -> Result<CommandAck, RunnerGone> {
        let (reply, rx) = oneshot::channel();
        self.mailbox.send(Request { command, reply }).map_err(|_| RunnerGone)?;
        rx.await.map_err(|_| RunnerGone)
    }

    pub fn is_running(&self) -> bool {
        !self.shared.stop.load(Ordering::Relaxed) && !*self.shared.closing.borrow()
    }

    /// Ask stream sessions to end, e.g. before a graceful shutdown.
    pub fn close(&self) {
        self.shared.closing.send_replace(true);
    }

    /// Resolves once [`Handle::close`] has been called.
    pub async fn closed(&self) {
        let mut rx = self.shared.closing.subscribe();
        // the sender lives in `shared`, which we hold
        let _ = rx.wait_for(|c| *c).await;
    }
}

/// A simulation running on its own thread.
pub struct Runner {
    handle: Handle,
    thread: Option<JoinHandle<World>>,
}

impl Runner {
    pub fn start(mut world: World, config: &GatewayConfig) -> Self {
        world.debug_truth = config.debug_truth;
        world.control.paused = config.start_paused;
        world.control.speed = config.speed;
        let snapshot = Arc::new(world.snapshot());
        let (frames, _) = broadcast::channel(config.stream_buffer.max(1));
        let shared = Arc::new(Shared {
            published: RwLock::new(Published { seq: 0, snapshot }),
            frames,
            stop: AtomicBool::new(false),
            closing: watch::channel(false).0,
        });
        let (tx, rx) = mpsc::channel();
        let mut lp = Loop {
            world,
            shared: shared.clone(),
            mailbox: rx,
            heartbeat: config.heartbeat,
            tail: VecDeque::new(),
            tail_len: config.event_tail,
            last_publish: Instant::now(),
        };
        let thread = std::thread::Builder::new()
            .name("mugsim-runner".into())
            .spawn(move || {
                lp.run();
                lp.world
            })
            .expect("spawn runner thread");
        Self {
            handle: Handle { shared, mailbox: tx },
            thread: Some(thread),
        }
    }

    pub fn handle(&self) -> Handle {
        self.handle.clone()
    }

    /// Stop the engine thread and hand back the world.
    pub fn shutdown(mut self) -> World {
        self.stop_and_join().expect("runner joined once")
    }

    fn stop_and_join(&mut self) -> Option<World> {
        self.handle.shared.stop.store(true, Ordering::Relaxed);
        let t = self.thread.take()?;
        Some(t.join().expect("runner thread panicked"))
    }
}

impl Drop for Runner {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

struct Loop {
    world: World,
    shared: Arc<Shared>,
    mailbox: mpsc::Receiver<Request>,
    heartbeat: Duration,
    tail: VecDeque<serde_json::Value>,
    tail_len: usize,
    last_publish: Instant,
}

/// How long an idle runner waits on the mailbox before checking `stop`.
const IDLE_POLL: Duration = Duration::from_millis(20);

impl Loop {
    fn run(&mut self) {
        let mut deadline = Instant::now();
        while !self.shared.stop.load(Ordering::Relaxed) {
            let idle = self.world.control.paused || self.world.finished();
            if idle {
                let wait = self.heartbeat.saturating_sub(self.last_publish.elapsed()).min(IDLE_POLL);
                let applied = self.serve_mailbox(Instant::now() + wait);
                if applied || self.last_publish.elapsed() >= self.heartbeat {
                    self.publish(Vec::new());
                }
                deadline = Instant::now();
                continue;
            }
            // commands arriving while we wait for the tick are applied
            // before it, and shown straight away
            if self.serve_mailbox(deadline) {
                self.publish(Vec::new());
                if self.world.control.paused {
                    continue;
                }
            }
            self.world.step();
            // the gateway keeps no files; hashing already happened in step
            self.world.telemetry.clear();
            self.world.tracks.clear();
            let events = self
                .world
                .drain_events()
                .iter()
                .map(|e| serde_json::to_value(e).expect("events serialize"))
                .collect();
            self.publish(events);
            let period = Duration::from_secs_f64(self.world.dt() / self.world.control.speed);
            let now = Instant::now();
            deadline += period;
            // after a stall, do not race to catch up
            if deadline + Duration::from_secs(1) < now {
                deadline = now;
            }
        }
    }

    /// Apply commands until `until`. Returns whether any arrived.
    fn serve_mailbox(&mut self, until: Instant) -> bool {
        let mut any = false;
        loop {
            if self.shared.stop.load(Ordering::Relaxed) {
                return any;
            }
            let now = Instant::now();
            let wait = until.saturating_duration_since(now).min(IDLE_POLL);
            let req = if until <= now {
                match self.mailbox.try_recv() {
                    Ok(r) => r,
                    Err(_) => return any,
                }
            } else {
                match self.mailbox.recv_timeout(wait) {
                    Ok(r) => r,
                    Err(RecvTimeoutError::Timeout) => continue,
                    Err(RecvTimeoutError::Disconnected) => {
                        std::thread::sleep(until.saturating_duration_since(Instant::now()));
                        return any;
                    }
                }
            };
            let ack = self.world.submit_command(req.command);
            // a caller that gave up waiting is not an error
            let _ = req.reply.send(ack);
            any = true;
        }
    }

    fn publish(&mut self, events: Vec<serde_json::Value>) {
        for e in &events {
            if self.tail.len() == self.tail_len {
                self.tail.pop_front();
            }
            if self.tail_len > 0 {
                self.tail.push_back(e.clone());
            }
        }
        let mut next = self.world.snapshot();
        next.events = self.tail.iter().cloned().collect();
        let mut p = self.shared.published.write().expect("runner lock");
        let update = diff(&p.snapshot, &next, events);
        let text = serde_json::to_string(&update).expect("updates serialize");
        p.seq += 1;
        p.snapshot = Arc::new(next);
        let frame = Arc::new(Frame { seq: p.seq, update, text });
        // no subscribers is fine
        let _ = self.shared.frames.send(frame);
        drop(p);
        self.last_publish = Instant::now();
    }
}
