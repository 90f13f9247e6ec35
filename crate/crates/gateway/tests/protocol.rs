use axum::body::Body;
use axum::http::{Request, StatusCode};
use futures_util::{SinkExt, StreamExt};
use http_body_util::BodyExt;
use mugsim::engine::World;
use mugsim::sa::{apply_update, AckStatus, CommandAck, Snapshot, Update, SNAPSHOT_SCHEMA, SNAPSHOT_VERSION};
use mugsim::scenario::load_scenario_file;
use mugsim_gateway::protocol::AckFrame;
use mugsim_gateway::{router, serve_on, GatewayConfig, Runner};
use std::path::Path;
use std::time::Duration;
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};
use tower::ServiceExt;

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn world(hours: f64) -> World {
    scenario("golden.toml", hours)
}

/// The default scenario has its glider already in the water.
fn scenario(name: &str, hours: f64) -> World {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    let mut c = load_scenario_file(&path).unwrap().config;
    c.simulation.duration = hours * 3600.0;
    World::new(c).unwrap()
}

fn fast() -> GatewayConfig {
    GatewayConfig {
        speed: 10_000.0,
        ..GatewayConfig::default()
    }
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: &str) -> (StatusCode, serde_json::Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_owned()))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null);
    (status, v)
}

async fn settle() {
    tokio::time::sleep(Duration::from_millis(150)).await;
}

#[tokio::test]
async fn health_and_snapshot_carry_the_schema() {
    let runner = Runner::start(world(1.0), &GatewayConfig { start_paused: true, ..fast() });
    let app = router(runner.handle());
    let (code, health) = call(&app, "GET", "/health", "").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(health["status"], "ok");
    assert_eq!(health["schema"], SNAPSHOT_SCHEMA);
    assert_eq!(health["version"], SNAPSHOT_VERSION);
    let (code, snap) = call(&app, "GET", "/snapshot", "").await;
    assert_eq!(code, StatusCode::OK);
    let snap: Snapshot = serde_json::from_value(snap).unwrap();
    assert_eq!(snap.schema, SNAPSHOT_SCHEMA);
    assert_eq!(snap.version, SNAPSHOT_VERSION);
    assert!(snap.truth.is_none());
    assert!(snap.vehicles.iter().all(|v| v.entry.first_hand));
}

#[tokio::test]
async fn debug_truth_is_a_gateway_flag() {
    let runner = Runner::start(world(1.0), &GatewayConfig { debug_truth: true, start_paused: true, ..fast() });
    let truth = runner.handle().snapshot().truth.clone().expect("truth enabled");
    assert!(truth.iter().any(|t| t.vehicle.as_str() == "mug-1"));
}

#[tokio::test]
async fn pause_halts_the_engine_but_snapshots_are_served() {
    let runner = Runner::start(world(6.0), &fast());
    let app = router(runner.handle());
    settle().await;
    let (code, ack) = call(&app, "POST", "/command", r#"{"command_id":"p","verb":"PAUSE_SIM"}"#).await;
    assert_eq!(code, StatusCode::OK, "{ack}");
    assert_eq!(ack["status"], "accepted");
    settle().await;
    let (_, a) = call(&app, "GET", "/snapshot", "").await;
    settle().await;
    let (code, b) = call(&app, "GET", "/snapshot", "").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(a["clock"]["paused"], true);
    assert!(a["clock"]["tick"].as_u64().unwrap() > 0);
    assert_eq!(a["clock"]["tick"], b["clock"]["tick"]);

    call(&app, "POST", "/command", r#"{"command_id":"r","verb":"RESUME_SIM"}"#).await;
    settle().await;
    let (_, c) = call(&app, "GET", "/snapshot", "").await;
    assert!(c["clock"]["tick"].as_u64() > b["clock"]["tick"].as_u64());
}

#[tokio::test]
async fn command_endpoint_reports_status_codes() {
    let runner = Runner::start(scenario("default.toml", 1.0), &GatewayConfig { start_paused: true, ..fast() });
    let app = router(runner.handle());
    let (code, ack) = call(&app, "POST", "/command", "{not json").await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!(ack["status"], "rejected");
    let (code, ack) = call(
        &app,
        "POST",
        "/command",
        r#"{"command_id":"deep","target":"mug-1","verb":"SET_TARGET_DEPTH","depth":250}"#,
    )
    .await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(ack["reason"].as_str().is_some_and(|r| !r.is_empty()));

    let body = r#"{"command_id":"d120","target":"mug-1","verb":"SET_TARGET_DEPTH","depth":120}"#;
    let (code, first) = call(&app, "POST", "/command", body).await;
    assert_eq!(code, StatusCode::OK);
    let first: CommandAck = serde_json::from_value(first).unwrap();
    assert_ne!(first.status, AckStatus::Rejected);
    let (_, again) = call(&app, "POST", "/command", body).await;
    let again: CommandAck = serde_json::from_value(again).unwrap();
    assert!(again.duplicate);
    assert_eq!(again.status, first.status);
}

struct Server {
    addr: std::net::SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    done: tokio::task::JoinHandle<World>,
}

async fn start(world: World, config: GatewayConfig) -> Server {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, rx) = oneshot::channel::<()>();
    let done = tokio::spawn(async move {
        serve_on(listener, world, config, async move {
            let _ = rx.await;
        })
        .await
        .unwrap()
    });
    Server { addr, stop: Some(stop), done }
}

impl Server {
    async fn connect(&self) -> Client {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/stream", self.addr)).await.unwrap();
        ws
    }

    async fn stop(mut self) -> World {
        self.stop.take().unwrap().send(()).unwrap();
        tokio::time::timeout(Duration::from_secs(10), self.done).await.expect("shutdown").unwrap()
    }
}

enum Frame {
    Update(Box<Update>),
    Ack(CommandAck),
    Closed,
}

async fn next(ws: &mut Client) -> Frame {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("frame in time");
        match msg {
            Some(Ok(Message::Text(t))) => {
                let v: serde_json::Value = serde_json::from_str(t.as_str()).unwrap();
                if v["type"] == "ack" {
                    let f: AckFrame = serde_json::from_value(v).unwrap();
                    return Frame::Ack(f.ack);
                }
                return Frame::Update(Box::new(serde_json::from_value(v).unwrap()));
            }
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return Frame::Closed,
            Some(Ok(_)) => {}
        }
    }
}

async fn next_update(ws: &mut Client) -> Update {
    match next(ws).await {
        Frame::Update(u) => *u,
        Frame::Ack(a) => panic!("unexpected ack {a:?}"),
        Frame::Closed => panic!("socket closed"),
    }
}

fn comparable(mut s: Snapshot) -> Snapshot {
    for v in &mut s.vehicles {
        v.staleness = 0.0;
    }
    s.events.clear();
    s
}

#[tokio::test]
async fn stream_is_a_snapshot_then_ordered_updates() {
    let server = start(world(6.0), fast()).await;
    let mut ws = server.connect().await;
    let Update::Snapshot(first) = next_update(&mut ws).await else { panic!("first frame must be a snapshot") };
    let mut client = *first;
    let mut last_tick = client.clock.tick;
    let mut deltas = 0;
    while client.clock.sim_time < 1800.0 {
        let u = next_update(&mut ws).await;
        match &u {
            Update::Delta { tick, .. } => {
                deltas += 1;
                assert!(*tick >= last_tick);
                last_tick = *tick;
            }
            Update::Heartbeat { tick, .. } => {
                assert!(*tick >= last_tick);
                last_tick = *tick;
            }
            other => panic!("{other:?}"),
        }
        apply_update(&mut client, &u);
    }
    assert!(deltas > 0);

    // pause over the socket, then compare against the now frozen state
    ws.send(Message::Text(r#"{"command_id":"hold","verb":"PAUSE_SIM"}"#.into())).await.unwrap();
    loop {
        match next(&mut ws).await {
            Frame::Update(u) => apply_update(&mut client, &u),
            Frame::Ack(a) => assert_eq!(a.status, AckStatus::Accepted),
            Frame::Closed => panic!("closed"),
        }
        if client.clock.paused {
            break;
        }
    }
    let res = http_get(server.addr, "/snapshot").await;
    let server_view: Snapshot = serde_json::from_str(&res).unwrap();
    assert_eq!(comparable(client), comparable(server_view));
    server.stop().await;
}

/// Minimal HTTP/1.1 GET over a raw socket.
async fn http_get(addr: std::net::SocketAddr, path: &str) -> String {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").as_bytes())
        .await
        .unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).await.unwrap();
    let text = String::from_utf8(buf).unwrap();
    let (head, body) = text.split_once("\r\n\r\n").unwrap();
    assert!(head.starts_with("HTTP/1.1 200"), "{head}");
    body.to_owned()
}

#[tokio::test]
async fn idle_engine_sends_heartbeats() {
    let config = GatewayConfig {
        start_paused: true,
        heartbeat: Duration::from_millis(50),
        ..fast()
    };
    let server = start(world(1.0), config).await;
    let mut ws = server.connect().await;
    assert!(matches!(next_update(&mut ws).await, Update::Snapshot(_)));
    for _ in 0..3 {
        match next_update(&mut ws).await {
            Update::Heartbeat { sim_time, clock, .. } => {
                assert_eq!(sim_time, 0.0);
                assert!(clock.paused);
            }
            other => panic!("{other:?}"),
        }
    }
    server.stop().await;
}

#[tokio::test]
async fn reconnect_starts_from_a_fresh_snapshot() {
    let server = start(world(6.0), fast()).await;
    let mut ws = server.connect().await;
    let Update::Snapshot(a) = next_update(&mut ws).await else { panic!() };
    for _ in 0..50 {
        next_update(&mut ws).await;
    }
    drop(ws);
    let mut ws = server.connect().await;
    let Update::Snapshot(b) = next_update(&mut ws).await else { panic!("resync must start with a snapshot") };
    assert!(b.clock.tick > a.clock.tick);
    let u = next_update(&mut ws).await;
    assert!(u.sim_time().unwrap() >= b.clock.sim_time);
    server.stop().await;
}

#[tokio::test]
async fn slow_subscriber_is_dropped_with_a_notice() {
    let config = GatewayConfig {
        stream_buffer: 2,
        ..fast()
    };
    let server = start(world(24.0), config).await;
    let mut ws = server.connect().await;
    // stop reading until the socket buffers back up
    tokio::time::sleep(Duration::from_secs(3)).await;
    let mut overflow = false;
    loop {
        match next(&mut ws).await {
            Frame::Update(u) if matches!(*u, Update::Overflow { .. }) => {
                let Update::Overflow { message } = *u else { unreachable!() };
                assert!(!message.is_empty());
                overflow = true;
            }
            Frame::Update(_) => assert!(!overflow, "updates after the overflow notice"),
            Frame::Ack(_) => unreachable!(),
            Frame::Closed => break,
        }
    }
    assert!(overflow);
    // others can still connect
    let mut again = server.connect().await;
    assert!(matches!(next_update(&mut again).await, Update::Snapshot(_)));
    server.stop().await;
}

#[tokio::test]
async fn vehicle_commands_travel_through_the_network() {
    let server = start(scenario("default.toml", 6.0), GatewayConfig { start_paused: true, ..fast() }).await;
    let mut ws = server.connect().await;
    next_update(&mut ws).await;
    ws.send(Message::Text(
        r#"{"command_id":"d150","target":"mug-1","verb":"SET_TARGET_DEPTH","depth":150}"#.into(),
    ))
    .await
    .unwrap();
    let ack = loop {
        if let Frame::Ack(a) = next(&mut ws).await {
            break a;
        }
    };
    assert_eq!(ack.command_id, "d150");
    assert_ne!(ack.status, AckStatus::Rejected, "{ack:?}");
    // still paused: nothing has been delivered, let alone applied
    let w = server.stop().await;
    assert_eq!(w.stats.commands_applied, 0);
}

#[tokio::test]
async fn shutdown_closes_open_streams() {
    let server = start(world(6.0), fast()).await;
    let mut ws = server.connect().await;
    next_update(&mut ws).await;
    let w = server.stop().await;
    assert!(w.tick > 0);
    loop {
        if let Frame::Closed = next(&mut ws).await {
            break;
        }
    }
}
