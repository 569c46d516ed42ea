//! Live feed over WebSocket.
//!
//! The client's first message must be `{"token": "...", "device_ids": [...]}`.
//! The server answers `{"type":"subscribed","device_ids":[...]}` and then
//! sends one JSON message per stored reading or assessment of those devices,
//! in per-device storage order. If any requested device is unknown or outside
//! the session's farms, the server answers
//! `{"type":"error","error":"forbidden","device_ids":[offending...]}` and
//! closes. A reconnect starts a fresh subscription from that moment.

use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use palmwatch::model::DeviceId;
use serde::Deserialize;
use serde_json::json;

use crate::api::AppState;

const HELLO_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Deserialize)]
struct Hello {
    token: String,
    device_ids: Vec<DeviceId>,
}

pub(crate) async fn stream(State(state): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| run(state, socket))
}

async fn reject(mut socket: WebSocket, body: serde_json::Value) {
    let _ = socket.send(Message::Text(body.to_string().into())).await;
    let _ = socket.send(Message::Close(None)).await;
}

async fn run(state: AppState, mut socket: WebSocket) {
    let hello = match tokio::time::timeout(HELLO_TIMEOUT, socket.recv()).await {
        Ok(Some(Ok(Message::Text(text)))) => serde_json::from_str::<Hello>(&text).ok(),
        _ => None,
    };
    let Some(hello) = hello else {
        return reject(socket, json!({"type": "error", "error": "expected {token, device_ids}"})).await;
    };
    let Some(session) = state.sessions.resolve(&hello.token) else {
        return reject(socket, json!({"type": "error", "error": "unauthorized"})).await;
    };
    let offending: Vec<&DeviceId> = hello
        .device_ids
        .iter()
        .filter(|id| {
            state
                .store
                .device(id)
                .is_none_or(|d| !session.can_access(&d.farm_id))
        })
        .collect();
    if !offending.is_empty() {
        return reject(
            socket,
            json!({"type": "error", "error": "forbidden", "device_ids": offending}),
        )
        .await;
    }

    let mut sub = state.store.hub().subscribe(hello.device_ids.iter().cloned());
    let ack = json!({"type": "subscribed", "device_ids": hello.device_ids});
    if socket.send(Message::Text(ack.to_string().into())).await.is_err() {
        return;
    }
    tracing::debug!(user = %session.user_id, devices = hello.device_ids.len(), "stream subscribed");

    loop {
        tokio::select! {
            event = sub.recv() => {
                let Some(event) = event else { break };
                let text = serde_json::to_string(&event).expect("event serializes");
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => {
                match incoming {
                    None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                    Some(Ok(_)) => {}
                }
            }
        }
    }
}
