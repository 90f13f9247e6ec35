use crate::protocol::{AckFrame, Health};
use crate::runner::{Handle, RunnerGone};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use mugsim::sa::{parse_command, AckStatus, CommandAck, Update, SNAPSHOT_SCHEMA, SNAPSHOT_VERSION};
use tokio::sync::broadcast::error::RecvError;

pub fn router(handle: Handle) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/snapshot", get(snapshot))
        .route("/command", post(command))
        .route("/stream", get(stream))
        .with_state(handle)
}

async fn health(State(h): State<Handle>) -> Json<Health> {
    let s = h.snapshot();
    Json(Health {
        status: if h.is_running() { "ok" } else { "stopping" },
        schema: SNAPSHOT_SCHEMA,
        version: SNAPSHOT_VERSION,
        clock: s.clock.clone(),
    })
}

async fn snapshot(State(h): State<Handle>) -> Response {
    Json(&*h.snapshot()).into_response()
}

/// Parse and submit one command document.
async fn submit_text(h: &Handle, text: &str) -> Result<CommandAck, RunnerGone> {
    match parse_command(text) {
        Ok(cmd) => h.submit(cmd).await,
        Err(ack) => Ok(ack),
    }
}

async fn command(State(h): State<Handle>, body: String) -> Response {
    let malformed = parse_command(&body).is_err();
    match submit_text(&h, &body).await {
        Ok(ack) => {
            let code = match ack.status {
                _ if malformed => StatusCode::BAD_REQUEST,
                AckStatus::Rejected => StatusCode::UNPROCESSABLE_ENTITY,
                AckStatus::Accepted | AckStatus::QueuedForUplink => StatusCode::OK,
            };
            (code, Json(ack)).into_response()
        }
        Err(RunnerGone) => (StatusCode::SERVICE_UNAVAILABLE, "simulation stopped").into_response(),
    }
}

async fn stream(ws: WebSocketUpgrade, State(h): State<Handle>) -> Response {
    ws.on_upgrade(move |socket| session(socket, h))
}

fn text(s: String) -> Message {
    Message::Text(s.into())
}

/// Full snapshot first, then every later update in order. Text frames from
/// the client are commands and are answered with an ack frame.
async fn session(socket: WebSocket, h: Handle) {
    let mut sub = h.subscribe();
    let (mut tx, mut rx) = socket.split();
    let first = Update::Snapshot(Box::new((*sub.snapshot).clone()));
    if tx.send(text(serde_json::to_string(&first).expect("snapshot serializes"))).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            _ = h.closed() => {
                let _ = tx.send(Message::Close(None)).await;
                return;
            }
            frame = sub.frames.recv() => match frame {
                Ok(f) if f.seq <= sub.seq => {}
                Ok(f) => {
                    if tx.send(text(f.text.clone())).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(n)) => {
                    let notice = Update::Overflow {
                        message: format!("subscriber fell {n} updates behind; reconnect for a fresh snapshot"),
                    };
                    let _ = tx.send(text(serde_json::to_string(&notice).expect("notice serializes"))).await;
                    let _ = tx.send(Message::Close(None)).await;
                    return;
                }
                Err(RecvError::Closed) => {
                    let _ = tx.send(Message::Close(None)).await;
                    return;
                }
            },
            msg = rx.next() => match msg {
                Some(Ok(Message::Text(body))) => {
                    let frame = match submit_text(&h, body.as_str()).await {
                        Ok(ack) => AckFrame::new(ack),
                        Err(RunnerGone) => return,
                    };
                    if tx.send(text(serde_json::to_string(&frame).expect("ack serializes"))).await.is_err() {
                        return;
                    }
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
