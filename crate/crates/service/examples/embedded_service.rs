//! Drive a simulated farm straight into the service store, then query it
//! through the HTTP router in-process: login, overview, readings, packet
//! tracer and notifications.

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use palmwatch::fieldsim::{SimConfig, Simulation};
use palmwatch_service::auth::hash_password;
use palmwatch_service::store::StoreSink;
use palmwatch_service::{router, AppState, ServiceConfig, SystemClock};
use serde_json::{json, Value};
use tower::ServiceExt;

const FARM: &str = r#"
seed = 5
digest_interval_seconds = 900
[edge]
detection = true
baseline_windows = 2
[[farms]]
farm_id = "farm-a"
[[farms.clusters]]
cluster_id = "c1"
gateway_id = "gw-1"
loss_probability = 0.1
[[farms.clusters.devices]]
device_id = "palm-001"
placement = "inside"
latitude = 25.38
longitude = 49.59
[[farms.clusters.devices]]
device_id = "palm-002"
placement = "inside"
latitude = 25.39
longitude = 49.60
infested_from_seconds = 1800
"#;

async fn call(state: &AppState, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> Value {
    let mut req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let body = body.map_or_else(Body::empty, |b| Body::from(b.to_string()));
    let resp = router(state.clone()).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    println!("{method} {uri} -> {status}");
    value
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let config = ServiceConfig::from_toml(&format!(
        r#"
storage_dir = "{}"
[[gateways]]
token = "gw-1-secret"
gateway_id = "gw-1"
farm_id = "farm-a"
cluster_id = "c1"
[[users]]
user_id = "alice"
password_hash = "{}"
role = "admin"
farms = ["farm-a"]
[[farms]]
farm_id = "farm-a"
name = "North grove"
owners = ["alice"]
clusters = ["c1"]
"#,
        dir.path().display(),
        hash_password("demo")
    ))?;
    let state = AppState::new(config, Arc::new(SystemClock))?;

    let mut sink = StoreSink(Arc::clone(&state.store));
    let report = tokio::task::block_in_place(|| Simulation::run(SimConfig::from_toml(FARM)?, 3600, &mut sink))?;
    println!("simulated {} s for {} devices", report.simulated_seconds, report.devices.len());

    let login = call(&state, "POST", "/auth/login", None, Some(json!({"user_id": "alice", "password": "demo"}))).await;
    let token = login["token"].as_str().unwrap().to_string();
    let t = Some(token.as_str());

    let overview = call(&state, "GET", "/farms/farm-a/overview", t, None).await;
    println!("  healthy {}% of {} palms, counts {}", overview["healthy_pct"], overview["palm_count"], overview["counts"]);

    let readings = call(&state, "GET", "/devices/palm-002/readings?max_points=5", t, None).await;
    println!("  {} stored, first decimated point {}", readings["total"], readings["points"][0]);

    let packets = call(&state, "GET", "/devices/palm-002/packets", t, None).await;
    println!("  packet tracer {}", packets["stats"]);

    let notes = call(&state, "GET", "/notifications?unread=true", t, None).await;
    for n in notes.as_array().into_iter().flatten() {
        println!("  notification {} {}", n["kind"], n["payload"]);
    }
    Ok(())
}
