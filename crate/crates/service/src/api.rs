//! HTTP routes.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{MatchedPath, Path, Query, Request, State};
use axum::http::{HeaderMap, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use palmwatch::detector::HealthAssessment;
use palmwatch::fieldsim::{packet_accounting, PacketStats};
use palmwatch::model::{
    magnitude_of, AccelSample, CreatedBy, DeviceId, DeviceRecord, Digest, FarmRecord, HealthLevel,
    HealthStatus, Likelihood, Placement, SensorKind,
};
use serde::{Deserialize, Serialize};

use crate::auth::{bearer, Role, Session, Sessions};
use crate::clock::Clock;
use crate::config::{GatewayCredential, ServiceConfig};
use crate::error::{ApiError, RowError};
use crate::store::{AuditOutcome, DevicePatch, IngestOrigin, IngestOutcome, Store, StoreError};

/// Shared state behind every handler.
#[derive(Clone)]
pub struct AppState {
    pub config: Arc<ServiceConfig>,
    pub store: Arc<Store>,
    pub sessions: Arc<Sessions>,
    pub clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let store = Store::open(config.storage_dir.clone(), Arc::clone(&clock))?;
        let sessions = Arc::new(Sessions::new(Arc::clone(&clock), config.token_ttl_seconds));
        Ok(Self {
            config: Arc::new(config),
            store,
            sessions,
            clock,
        })
    }

    pub fn session(&self, headers: &HeaderMap) -> Result<Session, ApiError> {
        let token = bearer(headers.get("authorization").and_then(|v| v.to_str().ok()));
        token
            .and_then(|t| self.sessions.resolve(t))
            .ok_or(ApiError::Unauthorized)
    }

    fn admin(&self, headers: &HeaderMap) -> Result<Session, ApiError> {
        let s = self.session(headers)?;
        if s.role != Role::Admin {
            return Err(ApiError::Forbidden("admin role required".into()));
        }
        Ok(s)
    }

    fn gateway(&self, headers: &HeaderMap) -> Result<&GatewayCredential, ApiError> {
        let token = bearer(headers.get("authorization").and_then(|v| v.to_str().ok()));
        token
            .and_then(|t| self.config.gateway_by_token(t))
            .ok_or(ApiError::Unauthorized)
    }

    /// Who is making a request, for the audit trail.
    fn actor(&self, headers: &HeaderMap) -> String {
        let token = bearer(headers.get("authorization").and_then(|v| v.to_str().ok()));
        match token {
            Some(t) => {
                if let Some(s) = self.sessions.resolve(t) {
                    s.user_id
                } else if let Some(g) = self.config.gateway_by_token(t) {
                    format!("gateway:{}", g.gateway_id)
                } else {
                    "anonymous".into()
                }
            }
            None => "anonymous".into(),
        }
    }
}

/// Overrides the audit actor (e.g. the user id a login attempt named).
#[derive(Debug, Clone)]
struct AuditActor(String);

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/auth/login", post(login))
        .route("/farms", get(list_farms))
        .route("/farms/{id}/overview", get(farm_overview))
        .route("/devices", get(list_devices).post(create_device))
        .route("/devices/{id}", get(get_device).put(update_device))
        .route("/devices/{id}/readings", get(readings))
        .route("/devices/{id}/assessments", get(assessments))
        .route("/devices/{id}/packets", get(packets))
        .route("/notifications", get(list_notifications).post(mark_notifications))
        .route("/ingest/batch", post(ingest_batch))
        .route("/ingest/digests", post(ingest_digests))
        .route("/ingest/assessments", post(ingest_assessments))
        .route("/audit", get(audit_log))
        .route("/stream", get(crate::stream::stream))
        .route_layer(middleware::from_fn_with_state(state.clone(), audit_layer))
        .route("/health", get(health))
        .with_state(state)
}

/// Records exactly one audit entry per mutating request.
async fn audit_layer(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if !matches!(*req.method(), Method::POST | Method::PUT) {
        return next.run(req).await;
    }
    let path = req
        .extensions()
        .get::<MatchedPath>()
        .map_or_else(|| req.uri().path().to_string(), |m| m.as_str().to_string());
    let action = format!("{} {}", req.method(), path);
    let target = req.uri().path().to_string();
    let actor = state.actor(req.headers());

    let response = next.run(req).await;
    let actor = response
        .extensions()
        .get::<AuditActor>()
        .map_or(actor, |a| a.0.clone());
    let status = response.status();
    let outcome = if status.is_success() {
        AuditOutcome::Ok
    } else if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
        AuditOutcome::Denied
    } else {
        AuditOutcome::Failed
    };
    match state.store.record_audit(&actor, &action, &target, outcome) {
        Ok(_) => response,
        Err(e) => ApiError::Storage(e).into_response(),
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct LoginRequest {
    user_id: String,
    password: String,
}

async fn login(State(state): State<AppState>, body: Bytes) -> Response {
    let Ok(req) = serde_json::from_slice::<LoginRequest>(&body) else {
        return ApiError::BadRequest("expected {\"user_id\", \"password\"}".into()).into_response();
    };
    let config = Arc::clone(&state.config);
    let sessions = Arc::clone(&state.sessions);
    let user_id = req.user_id.clone();
    let grant = tokio::task::spawn_blocking(move || sessions.login(&config, &req.user_id, &req.password))
        .await
        .ok()
        .flatten();
    let mut response = match grant {
        Some(g) => {
            tracing::info!(user = %g.user_id, "login");
            Json(g).into_response()
        }
        None => ApiError::InvalidCredentials.into_response(),
    };
    response.extensions_mut().insert(AuditActor(user_id));
    response
}

async fn list_farms(State(state): State<AppState>, headers: HeaderMap) -> Result<Json<Vec<FarmRecord>>, ApiError> {
    let s = state.session(&headers)?;
    Ok(Json(
        state
            .config
            .farms
            .iter()
            .filter(|f| s.can_access(&f.farm_id))
            .cloned()
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmOverview {
    pub farm_id: String,
    pub name: String,
    pub palm_count: usize,
    pub healthy_pct: f64,
    pub counts: BTreeMap<HealthLevel, usize>,
    pub latest_digests: Vec<Digest>,
}

/// Palm count, healthy share and per-level counts for one farm's devices.
///
/// An empty farm reports 100% healthy.
pub fn overview_of(farm_id: &str, name: &str, devices: &[DeviceRecord], latest_digests: Vec<Digest>) -> FarmOverview {
    let mut counts: BTreeMap<HealthLevel, usize> = [HealthLevel::Healthy, HealthLevel::Suspect, HealthLevel::Infested]
        .into_iter()
        .map(|l| (l, 0))
        .collect();
    for d in devices {
        *counts.entry(d.status.level).or_default() += 1;
    }
    let total = devices.len();
    let healthy_pct = if total == 0 {
        100.0
    } else {
        counts[&HealthLevel::Healthy] as f64 / total as f64 * 100.0
    };
    FarmOverview {
        farm_id: farm_id.to_string(),
        name: name.to_string(),
        palm_count: total,
        healthy_pct,
        counts,
        latest_digests,
    }
}

async fn farm_overview(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(farm_id): Path<String>,
) -> Result<Json<FarmOverview>, ApiError> {
    let s = state.session(&headers)?;
    if !s.can_access(&farm_id) {
        return Err(ApiError::Forbidden(format!("no access to farm {farm_id}")));
    }
    let devices: Vec<DeviceRecord> = state
        .store
        .devices()
        .into_iter()
        .filter(|d| d.farm_id == farm_id)
        .collect();
    let name = match state.config.farm(&farm_id) {
        Some(f) => f.name.clone(),
        None if !devices.is_empty() => farm_id.clone(),
        None => return Err(ApiError::NotFound(format!("farm {farm_id}"))),
    };
    let ids: BTreeSet<DeviceId> = devices.iter().map(|d| d.device_id.clone()).collect();
    let latest = state.store.latest_digests(&ids);
    Ok(Json(overview_of(&farm_id, &name, &devices, latest)))
}

#[derive(Deserialize)]
struct DeviceFilter {
    farm_id: Option<String>,
}

async fn list_devices(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(filter): Query<DeviceFilter>,
) -> Result<Json<Vec<DeviceRecord>>, ApiError> {
    let s = state.session(&headers)?;
    Ok(Json(
        state
            .store
            .devices()
            .into_iter()
            .filter(|d| s.can_access(&d.farm_id))
            .filter(|d| filter.farm_id.as_ref().is_none_or(|f| *f == d.farm_id))
            .collect(),
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewDevice {
    pub device_id: DeviceId,
    pub farm_id: String,
    pub cluster_id: String,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub sensor_placement: Placement,
    #[serde(default = "default_sensors")]
    pub sensors: Vec<SensorKind>,
    #[serde(default)]
    pub extra_sensors: BTreeMap<String, f64>,
}

fn default_sensors() -> Vec<SensorKind> {
    vec![SensorKind::Accelerometer]
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid body: {e}")))
}

async fn create_device(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<DeviceRecord>), ApiError> {
    let s = state.admin(&headers)?;
    let new: NewDevice = parse_json(&body)?;
    if !s.can_access(&new.farm_id) {
        return Err(ApiError::Forbidden(format!("no access to farm {}", new.farm_id)));
    }
    let record = DeviceRecord {
        device_id: new.device_id,
        farm_id: new.farm_id,
        cluster_id: new.cluster_id,
        latitude: new.latitude,
        longitude: new.longitude,
        sensor_placement: new.sensor_placement,
        sensors: new.sensors,
        status: HealthStatus::new(Likelihood::Low, state.clock.now()),
        created_by: CreatedBy::Manual,
        extra_sensors: new.extra_sensors,
    };
    let created = state.store.create_device(record)?;
    Ok((StatusCode::CREATED, Json(created)))
}

/// Resolves a device the session may see.
fn visible_device(state: &AppState, s: &Session, id: &DeviceId) -> Result<DeviceRecord, ApiError> {
    let record = state
        .store
        .device(id)
        .ok_or_else(|| ApiError::NotFound(format!("device {id}")))?;
    if !s.can_access(&record.farm_id) {
        return Err(ApiError::Forbidden(format!("no access to device {id}")));
    }
    Ok(record)
}

async fn get_device(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<DeviceRecord>, ApiError> {
    let s = state.session(&headers)?;
    Ok(Json(visible_device(&state, &s, &DeviceId::new(id))?))
}

async fn update_device(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<DeviceRecord>, ApiError> {
    let s = state.admin(&headers)?;
    let id = DeviceId::new(id);
    visible_device(&state, &s, &id)?;
    let patch: DevicePatch = parse_json(&body)?;
    if let Some(farm) = &patch.farm_id {
        if !s.can_access(farm) {
            return Err(ApiError::Forbidden(format!("no access to farm {farm}")));
        }
    }
    Ok(Json(state.store.update_device(&id, patch)?))
}

#[derive(Deserialize)]
struct RangeQuery {
    from: Option<DateTime<Utc>>,
    to: Option<DateTime<Utc>>,
    max_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingSeries {
    pub device_id: DeviceId,
    /// Stored points in the range before decimation.
    pub total: usize,
    pub points: Vec<AccelSample>,
}

pub const DEFAULT_MAX_POINTS: usize = 2000;

/// Keeps at most `max_points` items by uniform stride, always including the
/// first and last item when `max_points >= 2`.
pub fn decimate<T: Clone>(items: &[T], max_points: usize) -> Vec<T> {
    let n = items.len();
    if n <= max_points {
        return items.to_vec();
    }
    match max_points {
        0 => Vec::new(),
        1 => vec![items[0].clone()],
        m => (0..m).map(|i| items[i * (n - 1) / (m - 1)].clone()).collect(),
    }
}

async fn readings(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(q): Query<RangeQuery>,
) -> Result<Json<ReadingSeries>, ApiError> {
    let s = state.session(&headers)?;
    let id = DeviceId::new(id);
    visible_device(&state, &s, &id)?;
    let max_points = q.max_points.unwrap_or(DEFAULT_MAX_POINTS);
    if max_points == 0 {
        return Err(ApiError::BadRequest("max_points must be at least 1".into()));
    }
    let raw = state.store.readings(&id, q.from, q.to).unwrap_or_default();
    Ok(Json(ReadingSeries {
        device_id: id,
        total: raw.len(),
        points: decimate(&raw, max_points),
    }))
}

async fn assessments(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Vec<HealthAssessment>>, ApiError> {
    let s = state.session(&headers)?;
    let id = DeviceId::new(id);
    visible_device(&state, &s, &id)?;
    Ok(Json(state.store.assessments(&id).unwrap_or_default()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketReport {
    pub device_id: DeviceId,
    /// Absent when no packet arrived in the range.
    pub stats: Option<PacketStats>,
}

async fn packets(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(q): Query<RangeQuery>,
) -> Result<Json<PacketReport>, ApiError> {
    let s = state.session(&headers)?;
    let id = DeviceId::new(id);
    visible_device(&state, &s, &id)?;
    let raw = state.store.readings(&id, q.from, q.to).unwrap_or_default();
    Ok(Json(PacketReport {
        device_id: id,
        stats: packet_accounting(raw.iter().map(|r| r.seq)),
    }))
}

#[derive(Deserialize)]
struct NotificationQuery {
    #[serde(default)]
    unread: bool,
}

async fn list_notifications(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<NotificationQuery>,
) -> Result<Json<Vec<crate::store::NotificationRecord>>, ApiError> {
    let s = state.session(&headers)?;
    let mut notes = state.store.notifications(&s.farms);
    if q.unread {
        notes.retain(|n| !n.read);
    }
    Ok(Json(notes))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkRead {
    /// Omit to mark everything visible as read.
    ids: Option<Vec<u64>>,
}

async fn mark_notifications(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let s = state.session(&headers)?;
    let req: MarkRead = parse_json(&body)?;
    let updated = state.store.mark_read(req.ids.as_deref(), &s.farms)?;
    Ok(Json(serde_json::json!({ "updated": updated })))
}

/// One row of an ingest batch. `magnitude` is optional; when present it must
/// agree with the axes.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IngestRow {
    device_id: DeviceId,
    seq: u64,
    #[serde(with = "palmwatch::model::ts_millis")]
    timestamp: DateTime<Utc>,
    ax: f64,
    ay: f64,
    az: f64,
    magnitude: Option<f64>,
}

fn parse_row(value: serde_json::Value) -> Result<AccelSample, String> {
    let row: IngestRow = serde_json::from_value(value).map_err(|e| e.to_string())?;
    let m = magnitude_of(row.ax, row.ay, row.az).map_err(|e| e.to_string())?;
    if let Some(given) = row.magnitude {
        if (given - m).abs() > 1e-6 * m.max(1.0) {
            return Err(format!("magnitude {given} disagrees with axes ({m})"));
        }
    }
    AccelSample::new(row.device_id, row.seq, row.timestamp, row.ax, row.ay, row.az).map_err(|e| e.to_string())
}

/// Parses a whole batch, collecting every malformed row.
pub fn parse_batch(body: &[u8]) -> Result<Vec<AccelSample>, ApiError> {
    let rows: Vec<serde_json::Value> =
        serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("expected a JSON array: {e}")))?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut errors = Vec::new();
    for (row, value) in rows.into_iter().enumerate() {
        match parse_row(value) {
            Ok(s) => samples.push(s),
            Err(message) => errors.push(RowError { row, message }),
        }
    }
    if errors.is_empty() {
        Ok(samples)
    } else {
        Err(ApiError::MalformedBatch(errors))
    }
}

fn check_gateway_scope<'a>(
    state: &AppState,
    gw: &GatewayCredential,
    ids: impl IntoIterator<Item = &'a DeviceId>,
    allow_unknown: bool,
) -> Result<(), ApiError> {
    let ids: BTreeSet<&DeviceId> = ids.into_iter().collect();
    for id in ids {
        match state.store.device(id) {
            Some(d) if d.farm_id != gw.farm_id => {
                return Err(ApiError::Forbidden(format!(
                    "device {id} belongs to another farm"
                )))
            }
            None if !allow_unknown => return Err(ApiError::NotFound(format!("device {id}"))),
            _ => {}
        }
    }
    Ok(())
}

async fn ingest_batch(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<IngestOutcome>, ApiError> {
    let gw = state.gateway(&headers)?.clone();
    let samples = parse_batch(&body)?;
    check_gateway_scope(&state, &gw, samples.iter().map(|s| &s.device_id), true)?;
    let origin = IngestOrigin {
        gateway_id: gw.gateway_id.clone(),
        farm_id: gw.farm_id.clone(),
        cluster_id: gw.cluster_id.clone(),
    };
    let store = Arc::clone(&state.store);
    let outcome = tokio::task::spawn_blocking(move || store.ingest_samples(&samples, Some(&origin)))
        .await
        .map_err(|e| ApiError::BadRequest(format!("ingest aborted: {e}")))??;
    for id in &outcome.auto_registered {
        tracing::info!(device = %id, gateway = %gw.gateway_id, "device auto-detected");
    }
    Ok(Json(outcome))
}

async fn ingest_digests(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let gw = state.gateway(&headers)?.clone();
    let digests: Vec<Digest> = parse_json(&body)?;
    check_gateway_scope(&state, &gw, digests.iter().map(|d| &d.device_id), false)?;
    let mut accepted = 0;
    for d in &digests {
        accepted += usize::from(state.store.ingest_digest(d)?);
    }
    Ok(Json(serde_json::json!({ "accepted": accepted })))
}

async fn ingest_assessments(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let gw = state.gateway(&headers)?.clone();
    let items: Vec<HealthAssessment> = parse_json(&body)?;
    check_gateway_scope(&state, &gw, items.iter().map(|a| &a.device_id), false)?;
    let mut accepted = 0;
    for a in &items {
        accepted += usize::from(state.store.ingest_assessment(a)?);
    }
    Ok(Json(serde_json::json!({ "accepted": accepted })))
}

async fn audit_log(
    State(state): State<AppState>,
    headers: HeaderMap,
) -> Result<Json<Vec<crate::store::AuditEntry>>, ApiError> {
    state.admin(&headers)?;
    Ok(Json(state.store.audit()))
}
