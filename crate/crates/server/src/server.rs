//! WebSocket transport over the hub.

use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::ws::{Message as Frame, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use roomsim_core::Event;
use tokio::sync::watch;

use crate::hub::Hub;
use crate::protocol::encode;

/// Hub plus a wake-up signal for connection tasks.
pub struct Shared {
    hub: Mutex<Hub>,
    wake: watch::Sender<u64>,
}

impl Shared {
    pub fn new() -> Arc<Self> {
        Arc::new(Self { hub: Mutex::new(Hub::new()), wake: watch::channel(0).0 })
    }

    pub fn hub(&self) -> MutexGuard<'_, Hub> {
        // a panicked connection task leaves the hub consistent
        self.hub.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn publish(&self, update: crate::protocol::StateUpdate) {
        self.hub().publish(update);
        self.wake.send_modify(|g| *g += 1);
    }

    pub fn take_events(&self) -> Vec<Event> {
        self.hub().take_events()
    }
}

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new().route("/ws", get(upgrade)).route("/state", get(latest)).with_state(shared)
}

async fn latest(State(shared): State<Arc<Shared>>) -> Response {
    match shared.hub().latest().cloned() {
        Some(s) => Json(s).into_response(),
        None => (axum::http::StatusCode::SERVICE_UNAVAILABLE, "no snapshot yet").into_response(),
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

async fn connection(mut socket: WebSocket, shared: Arc<Shared>) {
    let id = shared.hub().connect();
    let mut wake = shared.wake.subscribe();
    tracing::debug!(id, "client connected");
    'conn: loop {
        let frames = shared.hub().outgoing(id);
        for env in frames {
            if socket.send(Frame::Text(encode(&env).into())).await.is_err() {
                break 'conn;
            }
        }
        tokio::select! {
            changed = wake.changed() => {
                if changed.is_err() {
                    break;
                }
            }
            frame = socket.recv() => match frame {
                Some(Ok(Frame::Text(text))) => {
                    shared.hub().receive(id, text.as_str());
                }
                Some(Ok(Frame::Binary(_))) => {
                    shared.hub().receive(id, "binary frame");
                }
                Some(Ok(Frame::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    shared.hub().disconnect(id);
    tracing::debug!(id, "client pruned");
}
