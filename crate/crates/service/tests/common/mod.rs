#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use chrono::{DateTime, Duration, Utc};
use http_body_util::BodyExt;
use palmwatch::model::AccelSample;
use palmwatch_service::auth::hash_password;
use palmwatch_service::{router, AppState, ManualClock, ServiceConfig};
use serde_json::Value;
use tower::ServiceExt;

pub const PASSWORD: &str = "correct horse";

pub fn epoch() -> DateTime<Utc> {
    DateTime::from_timestamp(1_559_376_000, 0).unwrap()
}

fn password_hash() -> &'static str {
    static HASH: OnceLock<String> = OnceLock::new();
    HASH.get_or_init(|| hash_password(PASSWORD))
}

/// Two farms, an admin and a viewer on farm-a, an admin on farm-b and one
/// gateway per farm.
pub fn config(storage: &std::path::Path) -> ServiceConfig {
    let hash = password_hash();
    ServiceConfig::from_toml(&format!(
        r#"
bind = "127.0.0.1:0"
storage_dir = "{dir}"
token_ttl_seconds = 600

[[gateways]]
token = "gw-a-token"
gateway_id = "gw-a"
farm_id = "farm-a"
cluster_id = "a1"

[[gateways]]
token = "gw-b-token"
gateway_id = "gw-b"
farm_id = "farm-b"
cluster_id = "b1"

[[users]]
user_id = "alice"
password_hash = "{hash}"
role = "admin"
farms = ["farm-a"]

[[users]]
user_id = "victor"
password_hash = "{hash}"
role = "viewer"
farms = ["farm-a"]

[[users]]
user_id = "bob"
password_hash = "{hash}"
role = "admin"
farms = ["farm-b"]

[[farms]]
farm_id = "farm-a"
name = "North grove"
owners = ["alice"]
clusters = ["a1"]

[[farms]]
farm_id = "farm-b"
name = "South grove"
owners = ["bob"]
clusters = ["b1"]
"#,
        dir = storage.display()
    ))
    .unwrap()
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub clock: Arc<ManualClock>,
    pub state: AppState,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(epoch()));
        let state = AppState::new(config(dir.path()), clock.clone()).unwrap();
        Self { dir, clock, state }
    }

    pub async fn call(&self, method: Method, path: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        call(&self.state, method, path, token, body).await
    }

    pub async fn login(&self, user: &str) -> String {
        let (status, body) = self
            .call(
                Method::POST,
                "/auth/login",
                None,
                Some(serde_json::json!({"user_id": user, "password": PASSWORD})),
            )
            .await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body["token"].as_str().unwrap().to_string()
    }

    pub fn advance(&self, secs: i64) {
        self.clock.advance(Duration::seconds(secs));
    }
}

/// Sends one request through a fresh router over `state`.
pub async fn call(
    state: &AppState,
    method: Method,
    path: &str,
    token: Option<&str>,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(path);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = router(state.clone()).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub fn samples(device: &str, seqs: impl IntoIterator<Item = u64>) -> Vec<AccelSample> {
    seqs.into_iter()
        .map(|i| {
            let t = epoch() + Duration::milliseconds(i as i64 * 10);
            AccelSample::new(device.into(), i, t, 0.05, -0.03, 9.7 + ((i * 37) % 11) as f64 * 0.02).unwrap()
        })
        .collect()
}

pub fn batch_json(samples: &[AccelSample]) -> Value {
    serde_json::to_value(samples).unwrap()
}

/// An assessment for `device` at `hour` hours after the epoch with the given
/// indicators fired.
pub fn assessment(device: &str, hour: i64, fired: [bool; 4]) -> palmwatch::HealthAssessment {
    use palmwatch::detector::{classify, IndicatorOutcome, Indicators};
    let o = |f: bool| IndicatorOutcome {
        fired: f,
        evaluable: true,
        value: Some(if f { 2.0 } else { 0.0 }),
        threshold: 1.0,
    };
    let indicators = Indicators {
        fft_level: o(fired[0]),
        psd_pad: o(fired[1]),
        whisker_ratio: o(fired[2]),
        mean_shift: o(fired[3]),
    };
    let fired_count = indicators.fired_count();
    palmwatch::HealthAssessment {
        device_id: device.into(),
        window_start: epoch() + Duration::hours(hour),
        indicators,
        fired_count,
        likelihood: classify(fired_count),
    }
}
