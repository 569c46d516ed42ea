//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use chrono::{DateTime, Utc};
use futures::{SinkExt, StreamExt};
use http_body_util::BodyExt;
use palmwatch::detector::{assess_summaries, assess_window, build_baseline, DetectorConfig};
use palmwatch::fieldsim::{packet_accounting, MemoryCloud, SimConfig, Simulation};
use palmwatch::ingest::{clean_outliers, windowize, WindowAlignment};
use palmwatch::model::{AccelSample, DeviceId, Likelihood, Placement};
use palmwatch::spectral::{fft_spectrum_of, welch_psd_of, WelchConfig};
use palmwatch::stats::{whisker_span_from_quartiles, StatSummary, TableRow};
use palmwatch_service::auth::hash_password;
use palmwatch_service::{router, AppState, ManualClock, Service, ServiceConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("spectral oracle", spectral_oracle),
        ("welch calibration", welch_calibration),
        ("whisker reproduction", whisker_reproduction),
        ("end-to-end detection", end_to_end_detection),
        ("cleaning property", cleaning_property),
        ("pipeline conservation", pipeline_conservation),
        ("service contract", service_contract),
        ("simulate determinism", simulate_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|panic| Err(panic_message(panic.as_ref())));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_message(panic: &(dyn std::any::Any + Send)) -> String {
    panic
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

// ---------------------------------------------------------------- spectral

/// Single-sided amplitude spectrum by a direct O(n²) DFT of the tapered,
/// zero-padded series.
fn dft_amplitudes(values: &[f64], detrend: bool) -> Vec<f64> {
    let n = values.len();
    let n_fft = n.next_power_of_two();
    let taper: Vec<f64> = (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos())
        .collect();
    let mean = if detrend { values.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let x: Vec<f64> = values.iter().zip(&taper).map(|(v, w)| (v - mean) * w).collect();
    let twiddle: Vec<(f64, f64)> = (0..n_fft)
        .map(|k| {
            let a = -2.0 * PI * k as f64 / n_fft as f64;
            (a.cos(), a.sin())
        })
        .collect();
    let sum: f64 = taper.iter().sum();
    let half = n_fft / 2;
    (0..=half)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in x.iter().enumerate() {
                let (c, s) = twiddle[(k * j) % n_fft];
                re += v * c;
                im += v * s;
            }
            let scale = if k == 0 || k == half { 1.0 } else { 2.0 };
            scale * re.hypot(im) / sum
        })
        .collect()
}

fn spectral_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let n = match case {
            0 => 8,
            1 => 4096,
            _ => rng.random_range(8..=4096),
        };
        let offset = rng.random_range(-10.0..10.0);
        let x: Vec<f64> = (0..n).map(|_| offset + rng.random_range(-2.0..2.0)).collect();
        let detrend = case % 2 == 0;
        let got = fft_spectrum_of(&x, 100.0, detrend).map_err(|e| e.to_string())?;
        let want = dft_amplitudes(&x, detrend);
        ensure!(got.amplitudes.len() == want.len(), "n={n}: {} bins, want {}", got.amplitudes.len(), want.len());
        for (k, (g, w)) in got.amplitudes.iter().zip(&want).enumerate() {
            let rel = (g - w).abs() / w.abs();
            ensure!(rel <= 1e-6, "n={n} bin {k}: {g} vs {w} (relative {rel:e})");
            worst = worst.max(rel);
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("200 signals, worst relative error {worst:.1e}"))
}

fn welch_calibration() -> Outcome {
    let fs = 100.0;
    let sine: Vec<f64> = (0..40_960).map(|i| (2.0 * PI * 5.0 * i as f64 / fs).sin()).collect();
    let psd = welch_psd_of(&sine, fs, &WelchConfig::default()).map_err(|e| e.to_string())?;
    let centre = (5.0 / psd.bin_width()).round() as usize;
    let band = psd.band_power(centre - 2, centre + 2);
    ensure!((band - 0.5).abs() <= 0.5 * 0.05, "sine band power {band}");

    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let noise: Vec<f64> = (0..40_960).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
    let variance = noise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (noise.len() - 1) as f64;
    let psd = welch_psd_of(&noise, fs, &WelchConfig::default()).map_err(|e| e.to_string())?;
    let total = psd.total_power();
    ensure!((total - variance).abs() <= 0.1 * variance, "noise power {total} vs variance {variance}");
    Ok(format!("sine band {band:.4}, noise {total:.4} vs variance {variance:.4}"))
}

// ------------------------------------------------------------------ stats

fn whisker_reproduction() -> Outcome {
    let before = TableRow {
        n: 24_077,
        mean: 9.74,
        std: 0.25,
        median: 9.73,
        min: 8.29,
        q25: 9.58,
        q75: 9.89,
        max: 11.67,
        duration_minutes: 60.0,
    };
    let after = TableRow {
        n: 17_614,
        mean: 9.94,
        std: 0.37,
        median: 9.93,
        min: 8.20,
        q25: 9.71,
        q75: 10.15,
        max: 12.64,
        duration_minutes: 60.0,
    };
    let spans = [
        whisker_span_from_quartiles(before.q25, before.q75).map_err(|e| e.to_string())?,
        whisker_span_from_quartiles(after.q25, after.q75).map_err(|e| e.to_string())?,
    ];
    for (got, reference) in spans.iter().zip([1.2169, 1.7720]) {
        ensure!((got - reference).abs() <= 0.03, "span {got} vs expected {reference}");
    }
    let before = StatSummary::from_table_row(before).map_err(|e| e.to_string())?;
    let after = StatSummary::from_table_row(after).map_err(|e| e.to_string())?;
    let a = assess_summaries("inside".into(), Utc::now(), &after, &before, &DetectorConfig::default());
    ensure!(a.indicators.whisker_ratio.fired, "whisker ratio quiet: {:?}", a.indicators.whisker_ratio);
    ensure!(a.indicators.mean_shift.fired, "mean shift quiet: {:?}", a.indicators.mean_shift);
    ensure!(a.likelihood >= Likelihood::Medium, "likelihood {:?}", a.likelihood);
    Ok(format!("spans {:.4} / {:.4}, likelihood {:?}", spans[0], spans[1], a.likelihood))
}

// --------------------------------------------------------------- detector

const HOUR: u64 = 3600;

fn one_palm(seed: u64) -> SimConfig {
    SimConfig::from_toml(&format!(
        r#"
seed = {seed}
[edge]
detection = false
[[farms]]
farm_id = "f"
[[farms.clusters]]
cluster_id = "c"
gateway_id = "g"
[[farms.clusters.devices]]
device_id = "palm"
placement = "inside"
infested_from_seconds = {onset}
"#,
        onset = 3 * HOUR
    ))
    .expect("valid config")
}

fn end_to_end_detection() -> Outcome {
    let started = Instant::now();
    let cfg = DetectorConfig::default();
    let palm = DeviceId::new("palm");
    let mut min_pad = f64::INFINITY;
    for seed in 1..=20 {
        let mut cloud = MemoryCloud::retaining();
        Simulation::run(one_palm(seed), 6 * HOUR, &mut cloud).map_err(|e| e.to_string())?;
        let samples = cloud.samples.remove(&palm).ok_or("no samples stored")?;
        let (clean, _) = clean_outliers(samples, 6.0, 17.0).map_err(|e| e.to_string())?;
        let windows = windowize(&clean, HOUR as f64, WindowAlignment::StreamStart, 100.0);
        ensure!(windows.len() == 6, "seed {seed}: {} windows", windows.len());
        let baseline = build_baseline(&palm, Placement::Inside, &windows[..3], &cfg).map_err(|e| e.to_string())?;
        for (hour, w) in windows.iter().enumerate() {
            let a = assess_window(w, Placement::Inside, &baseline, &cfg).map_err(|e| e.to_string())?;
            if hour < 3 {
                ensure!(a.likelihood == Likelihood::Low, "seed {seed} healthy hour {hour}: {:?}", a.likelihood);
            } else {
                ensure!(a.likelihood == Likelihood::High, "seed {seed} infested hour {hour}: {:?}", a.likelihood);
                let pad = a.indicators.psd_pad.value.unwrap_or(f64::NAN);
                ensure!(pad > 0.0, "seed {seed} infested hour {hour}: PAD {pad}");
                min_pad = min_pad.min(pad);
            }
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!("20 seeds, 60 healthy hours Low, 60 infested hours High, smallest PAD {min_pad:.2e}"))
}

// ----------------------------------------------------------------- ingest

fn axis() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => -20.0f64..20.0,
        1 => -1e6f64..1e6,
        1 => Just(0.0),
    ]
}

fn cleaning_property() -> Outcome {
    let epoch = DateTime::from_timestamp(1_559_376_000, 0).expect("valid epoch");
    let strategy = proptest::collection::vec((axis(), axis(), axis()), 0..400);
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 1000,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    runner
        .run(&strategy, |axes| {
            let samples: Vec<AccelSample> = axes
                .iter()
                .enumerate()
                .filter_map(|(i, &(x, y, z))| {
                    let t = epoch + chrono::Duration::milliseconds(10 * i as i64);
                    AccelSample::new("p".into(), i as u64, t, x, y, z).ok()
                })
                .collect();
            let (once, _) = clean_outliers(samples, 6.0, 17.0).unwrap();
            prop_assert!(once.iter().all(|s| (6.0..=17.0).contains(&s.magnitude)));
            let (twice, report) = clean_outliers(once.clone(), 6.0, 17.0).unwrap();
            prop_assert_eq!(&twice, &once);
            prop_assert_eq!(report.kept, once.len() as u64);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 random vectors bounded and idempotent".into())
}

// --------------------------------------------------------------- fieldsim

fn ten_devices() -> SimConfig {
    let mut text = String::from(
        r#"
seed = 2019
digest_interval_seconds = 60
[edge]
detection = false
[[farms]]
farm_id = "farm"
"#,
    );
    for cluster in 0..2 {
        text.push_str(&format!(
            "[[farms.clusters]]\ncluster_id = \"c{cluster}\"\ngateway_id = \"g{cluster}\"\nloss_probability = 0.1\n"
        ));
        for d in 0..5 {
            let placement = if d % 2 == 0 { "inside" } else { "outside" };
            text.push_str(&format!(
                "[[farms.clusters.devices]]\ndevice_id = \"palm-{cluster}{d}\"\nplacement = \"{placement}\"\n"
            ));
            if d == 4 {
                text.push_str("infested_from_seconds = 600\n");
            }
        }
    }
    SimConfig::from_toml(&text).expect("valid config")
}

fn pipeline_conservation() -> Outcome {
    let config = ten_devices();
    let (origin, interval_ms) = (config.start, (config.digest_interval_seconds * 1000.0) as i64);
    let mut cloud = MemoryCloud::retaining();
    let report = Simulation::run(config, 20 * 60, &mut cloud).map_err(|e| e.to_string())?;
    ensure!(report.devices.len() == 10, "{} devices", report.devices.len());

    let mut loss = Vec::new();
    for (device, counters) in &report.devices {
        let stored = cloud.stored.get(device).copied().unwrap_or(0);
        ensure!(
            counters.generated == stored + counters.dropped,
            "{device}: generated {} != stored {stored} + dropped {}",
            counters.generated,
            counters.dropped
        );
        let samples = &cloud.samples[device];
        ensure!(samples.len() as u64 == stored, "{device}: retained {} vs stored {stored}", samples.len());

        // brute-force digests from what reached the cloud
        let mut buckets: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for s in samples {
            let idx = (s.timestamp - origin).num_milliseconds().div_euclid(interval_ms);
            buckets.entry(idx).or_default().push(s.magnitude);
        }
        let digests: Vec<_> = cloud.digests.iter().filter(|d| &d.device_id == device).collect();
        ensure!(digests.len() == buckets.len(), "{device}: {} digests vs {} intervals", digests.len(), buckets.len());
        for (d, (idx, values)) in digests.iter().zip(&buckets) {
            let start = origin + chrono::Duration::milliseconds(idx * interval_ms);
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            ensure!(d.window_start == start, "{device}: digest at {} vs {start}", d.window_start);
            ensure!(d.count == values.len() as u64, "{device}@{start}: count {} vs {}", d.count, values.len());
            ensure!(d.min == min && d.max == max, "{device}@{start}: min/max differ");
            ensure!((d.mean - mean).abs() <= 1e-9, "{device}@{start}: mean {} vs {mean}", d.mean);
        }

        let stats = packet_accounting(samples.iter().map(|s| s.seq)).ok_or("no packets")?;
        ensure!((stats.lost_pct - 10.0).abs() <= 0.5, "{device}: lost {:.3}%", stats.lost_pct);
        loss.push(stats.lost_pct);
    }
    let (lo, hi) = loss.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(format!("10 devices conserved, digests exact, lost {lo:.2}%..{hi:.2}%"))
}

// ---------------------------------------------------------------- service

const PASSWORD: &str = "open sesame";

fn service_config(storage: &Path) -> ServiceConfig {
    let hash = hash_password(PASSWORD);
    ServiceConfig::from_toml(&format!(
        r#"
bind = "127.0.0.1:0"
storage_dir = "{dir}"

[[gateways]]
token = "gw-a"
gateway_id = "gateway-a"
farm_id = "farm-a"
cluster_id = "a1"

[[gateways]]
token = "gw-b"
gateway_id = "gateway-b"
farm_id = "farm-b"
cluster_id = "b1"

[[users]]
user_id = "amal"
password_hash = "{hash}"
role = "admin"
farms = ["farm-a"]

[[users]]
user_id = "badr"
password_hash = "{hash}"
role = "admin"
farms = ["farm-b"]

[[farms]]
farm_id = "farm-a"
name = "Date grove"
owners = ["amal"]
clusters = ["a1"]

[[farms]]
farm_id = "farm-b"
name = "Oasis grove"
owners = ["badr"]
clusters = ["b1"]
"#,
        dir = storage.display()
    ))
    .expect("valid service config")
}

async fn call(state: &AppState, method: Method, path: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
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
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn batch(device: &str, seqs: std::ops::Range<u64>) -> Value {
    let epoch = DateTime::from_timestamp(1_559_376_000, 0).unwrap();
    let rows: Vec<AccelSample> = seqs
        .map(|i| {
            let t = epoch + chrono::Duration::milliseconds(10 * i as i64);
            AccelSample::new(device.into(), i, t, 0.1, -0.2, 9.6 + (i % 7) as f64 * 0.03).unwrap()
        })
        .collect();
    serde_json::to_value(rows).unwrap()
}

fn service_contract() -> Outcome {
    tokio::runtime::Runtime::new()
        .map_err(|e| e.to_string())?
        .block_on(service_contract_async())
}

async fn service_contract_async() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let clock = Arc::new(ManualClock::new(Utc::now()));
    let service = Service::bind_with_clock(service_config(dir.path()), clock)
        .await
        .map_err(|e| e.to_string())?;
    let addr = service.local_addr();
    let state = service.state().clone();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(service.run(async move {
        let _ = stopped.await;
    }));
    let mut mutations = 0usize;

    let mut tokens = BTreeMap::new();
    for user in ["amal", "badr"] {
        let (status, body) = call(
            &state,
            Method::POST,
            "/auth/login",
            None,
            Some(json!({"user_id": user, "password": PASSWORD})),
        )
        .await;
        mutations += 1;
        ensure!(status == StatusCode::OK, "login {user}: {status}");
        tokens.insert(user, body["token"].as_str().unwrap_or_default().to_string());
    }
    let (amal, badr) = (tokens["amal"].clone(), tokens["badr"].clone());

    let device = json!({
        "device_id": "a-1", "farm_id": "farm-a", "cluster_id": "a1", "sensor_placement": "inside"
    });
    let (status, body) = call(&state, Method::POST, "/devices", Some(&amal), Some(device)).await;
    mutations += 1;
    ensure!(status == StatusCode::CREATED, "register a-1: {status} {body}");

    // subscribe before any data so the stream can be compared with storage
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/stream"))
        .await
        .map_err(|e| e.to_string())?;
    ws.send(Message::Text(json!({"token": amal, "device_ids": ["a-1"]}).to_string().into()))
        .await
        .map_err(|e| e.to_string())?;

    // idempotence
    for (token, device) in [("gw-a", "a-1"), ("gw-b", "b-1")] {
        let (status, body) = call(&state, Method::POST, "/ingest/batch", Some(token), Some(batch(device, 0..300))).await;
        mutations += 1;
        ensure!(status == StatusCode::OK && body["accepted"] == 300, "first ingest {device}: {status} {body}");
    }
    let snapshot = |state: &AppState| (state.store.readings(&"a-1".into(), None, None), state.store.devices());
    let before = snapshot(&state);
    let (_, replay) = call(&state, Method::POST, "/ingest/batch", Some("gw-a"), Some(batch("a-1", 0..300))).await;
    mutations += 1;
    ensure!(replay["accepted"] == 0 && replay["duplicates"] == 300, "replay: {replay}");
    ensure!(snapshot(&state) == before, "replayed batch changed storage");
    let (status, _) = call(&state, Method::POST, "/ingest/batch", Some("gw-a"), Some(batch("a-1", 300..400))).await;
    mutations += 1;
    ensure!(status == StatusCode::OK, "second ingest: {status}");

    // authorization boundary
    for path in [
        "/devices/a-1",
        "/devices/a-1/readings",
        "/devices/a-1/assessments",
        "/devices/a-1/packets",
        "/farms/farm-a/overview",
    ] {
        let (status, body) = call(&state, Method::GET, path, Some(&badr), None).await;
        ensure!(status == StatusCode::FORBIDDEN, "GET {path} as other farm: {status} {body}");
    }
    let (status, _) = call(&state, Method::PUT, "/devices/a-1", Some(&badr), Some(json!({"latitude": 1.0}))).await;
    mutations += 1;
    ensure!(status == StatusCode::FORBIDDEN, "PUT across farms: {status}");
    let (status, _) = call(&state, Method::POST, "/ingest/batch", Some("gw-b"), Some(batch("a-1", 400..410))).await;
    mutations += 1;
    ensure!(status == StatusCode::FORBIDDEN, "gateway across farms: {status}");
    let (_, listed) = call(&state, Method::GET, "/devices", Some(&badr), None).await;
    let visible: Vec<&str> = listed
        .as_array()
        .map(|a| a.iter().filter_map(|d| d["device_id"].as_str()).collect())
        .unwrap_or_default();
    ensure!(visible == ["b-1"], "other farm sees {visible:?}");
    let (status, _) = call(&state, Method::PUT, "/devices/a-1", Some(&amal), Some(json!({"latitude": 24.6}))).await;
    mutations += 1;
    ensure!(status == StatusCode::OK, "owner update: {status}");

    // audit completeness
    let audit = state.store.audit();
    ensure!(audit.len() == mutations, "{} audit entries for {mutations} mutations", audit.len());

    // stream/storage consistency
    let mut streamed = Vec::new();
    while streamed.len() < 400 {
        let next = tokio::time::timeout(Duration::from_secs(5), ws.next()).await;
        match next {
            Ok(Some(Ok(Message::Text(text)))) => {
                let v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
                if v["type"] == "reading" {
                    streamed.push(v);
                }
            }
            Ok(Some(Ok(_))) => {}
            other => return Err(format!("stream ended after {} readings: {other:?}", streamed.len())),
        }
    }
    let stored = state.store.readings(&"a-1".into(), None, None).ok_or("no readings stored")?;
    ensure!(stored.len() == streamed.len(), "stored {} vs streamed {}", stored.len(), streamed.len());
    for (event, record) in streamed.iter_mut().zip(&stored) {
        event.as_object_mut().map(|o| o.remove("type"));
        let record = serde_json::to_value(record).map_err(|e| e.to_string())?;
        ensure!(*event == record, "streamed {event} vs stored {record}");
    }

    drop(ws);
    let _ = stop.send(());
    server.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;
    Ok(format!(
        "replay stored nothing, cross-farm denied, {mutations} mutations audited, 400 streamed readings match storage"
    ))
}

// -------------------------------------------------------------------- cli

const SIM_CONFIG: &str = r#"
seed = 77
digest_interval_seconds = 300
[edge]
baseline_windows = 1
[[farms]]
farm_id = "farm"
[[farms.clusters]]
cluster_id = "north"
gateway_id = "gw-north"
loss_probability = 0.08
[[farms.clusters.devices]]
device_id = "palm-1"
placement = "inside"
infested_from_seconds = 600
[[farms.clusters.devices]]
device_id = "palm-2"
placement = "outside"
auto_detect = true
[[farms.clusters]]
cluster_id = "south"
gateway_id = "gw-south"
[[farms.clusters.devices]]
device_id = "palm-3"
placement = "inside"
"#;

fn files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn simulate_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("farm.toml");
    fs::write(&config, SIM_CONFIG).map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for run in ["first", "second"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_palmwatch"))
            .arg("simulate")
            .arg("--config")
            .arg(&config)
            .args(["--duration", "20m", "--output"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(status.status.success(), "{run} run failed: {}", String::from_utf8_lossy(&status.stderr));
        trees.push(files(&out));
    }
    ensure!(trees[0].len() >= 6, "only {} files written", trees[0].len());
    let names: Vec<_> = trees[0].iter().map(|(p, _)| p.clone()).collect();
    ensure!(names == trees[1].iter().map(|(p, _)| p.clone()).collect::<Vec<_>>(), "file sets differ");
    for ((path, a), (_, b)) in trees[0].iter().zip(&trees[1]) {
        ensure!(a == b, "{} differs between runs", path.display());
    }
    let bytes: usize = trees[0].iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{} files, {bytes} bytes identical", names.len()))
}
