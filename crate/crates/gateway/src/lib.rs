//! Operator gateway over a live simulation.
//!
//! One [`World`] runs on a dedicated thread, paced against the wall clock.
//! The gateway serves:
//!
//! | route            | method | body                                   |
//! |------------------|--------|----------------------------------------|
//! | `/health`        | GET    | status, schema name/version, sim clock |
//! | `/snapshot`      | GET    | the latest whole-tick `Snapshot`       |
//! | `/command`       | POST   | `OperatorCommand` in, `CommandAck` out |
//! | `/stream`        | GET    | WebSocket upgrade                      |
//!
//! All documents are JSON. Snapshots carry `schema` and `version`.
//!
//! On `/stream` the first frame is `{"type":"snapshot", ...}`. Each later
//! frame is a `delta` or `heartbeat` for one published tick, in order. A
//! client that falls more than the buffer behind gets an `overflow` frame
//! and the socket is closed; reconnecting starts again from a snapshot.
//! Text frames sent by the client are commands; each is answered with
//! `{"type":"ack", ...}`.
//!
//! Commands are queued to the engine thread and applied between ticks.
//! A rejected command answers 422 on `/command` and malformed JSON 400.

pub mod http;
pub mod protocol;
pub mod runner;

use mugsim::engine::World;
use std::net::SocketAddr;
use std::time::Duration;
use thiserror::Error;

pub use http::router;
pub use runner::{Handle, Runner};

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    /// Expose ground truth next to the knowledge base. Development only.
    pub debug_truth: bool,
    /// Attach with the engine paused until a RESUME_SIM arrives.
    pub start_paused: bool,
    /// Real-time multiplier.
    pub speed: f64,
    /// Updates buffered per stream client before it is dropped.
    pub stream_buffer: usize,
    /// Heartbeat period while the engine is idle.
    pub heartbeat: Duration,
    /// Recent events kept in the snapshot.
    pub event_tail: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            debug_truth: false,
            start_paused: false,
            speed: 1.0,
            stream_buffer: 1024,
            heartbeat: Duration::from_secs(1),
            event_tail: 200,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("speed must lie in (0, 10000], got {0}")]
    Speed(f64),
    #[error("binding {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.speed.is_finite() && self.speed > 0.0 && self.speed <= 10_000.0) {
            return Err(GatewayError::Speed(self.speed));
        }
        Ok(())
    }
}

/// Run the gateway on `addr` until `shutdown` resolves. Returns the world
/// as it stood when the engine stopped.
pub async fn serve(
    world: World,
    config: GatewayConfig,
    addr: SocketAddr,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<World, GatewayError> {
    config.validate()?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| GatewayError::Bind { addr, source })?;
    serve_on(listener, world, config, shutdown).await
}

/// As [`serve`] on an already bound listener.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    world: World,
    config: GatewayConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<World, GatewayError> {
    config.validate()?;
    let runner = Runner::start(world, &config);
    let handle = runner.handle();
    let app = router(handle.clone());
    let shutdown = async move {
        shutdown.await;
        handle.close();
    };
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    Ok(tokio::task::spawn_blocking(move || runner.shutdown())
        .await
        .expect("runner shutdown"))
}
