//! Serve on an ephemeral port, subscribe over WebSocket to one palm and
//! watch readings and assessments arrive while a simulation feeds the store.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::Request;
use futures::{SinkExt, StreamExt};
use http_body_util::BodyExt;
use palmwatch::fieldsim::{SimConfig, Simulation};
use palmwatch_service::auth::hash_password;
use palmwatch_service::store::StoreSink;
use palmwatch_service::{router, Service, ServiceConfig};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

const FARM: &str = r#"
seed = 8
digest_interval_seconds = 600
[edge]
detection = true
baseline_windows = 1
[[farms]]
farm_id = "farm-a"
[[farms.clusters]]
cluster_id = "c1"
gateway_id = "gw-1"
[[farms.clusters.devices]]
device_id = "palm-7"
placement = "inside"
infested_from_seconds = 1200
"#;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let config = ServiceConfig::from_toml(&format!(
        r#"
bind = "127.0.0.1:0"
storage_dir = "{}"
[[users]]
user_id = "vera"
password_hash = "{}"
role = "viewer"
farms = ["farm-a"]
[[farms]]
farm_id = "farm-a"
name = "Demo"
owners = ["vera"]
clusters = ["c1"]
"#,
        dir.path().display(),
        hash_password("demo")
    ))?;
    let service = Service::bind(config).await?;
    let addr = service.local_addr();
    let state = service.state().clone();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(service.run(async {
        let _ = stopped.await;
    }));

    let mut sim = Simulation::new(SimConfig::from_toml(FARM)?)?;
    let mut sink = StoreSink(Arc::clone(&state.store));
    sim.advance(1, &mut sink)?;

    let login = Request::post("/auth/login")
        .header("content-type", "application/json")
        .body(Body::from(json!({"user_id": "vera", "password": "demo"}).to_string()))?;
    let resp = router(state.clone()).oneshot(login).await?;
    let grant: Value = serde_json::from_slice(&resp.into_body().collect().await?.to_bytes())?;

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/stream")).await?;
    let hello = json!({"token": grant["token"], "device_ids": ["palm-7"]});
    ws.send(Message::Text(hello.to_string().into())).await?;
    println!("{}", ws.next().await.unwrap()?);

    let feeder = tokio::task::spawn_blocking(move || -> Result<(), String> {
        for _ in 0..30 {
            sim.advance(60, &mut sink).map_err(|e| e.to_string())?;
        }
        Ok(())
    });

    let mut readings = 0u64;
    while let Ok(Some(msg)) = tokio::time::timeout(Duration::from_secs(2), ws.next()).await {
        let Message::Text(text) = msg? else { continue };
        let event: Value = serde_json::from_str(&text)?;
        match event["type"].as_str() {
            Some("reading") => {
                readings += 1;
                if readings <= 2 {
                    println!("reading {text}");
                }
            }
            Some("assessment") => println!(
                "assessment at {} after {readings} readings -> {}",
                event["window_start"], event["likelihood"]
            ),
            _ => println!("{text}"),
        }
    }
    feeder.await??;
    println!("{readings} readings streamed");

    stop.send(()).ok();
    server.await??;
    Ok(())
}
