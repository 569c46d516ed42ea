//! Embedded append-only storage.
//!
//! Layout under the storage directory:
//!
//! ```text
//! index.json                          device records (rewritten atomically)
//! samples/<device>/<YYYY-MM-DDTHH>.jsonl  raw samples, one segment per device-hour
//! digests.jsonl
//! assessments.jsonl
//! notifications.json                  (rewritten atomically; carries read flags)
//! audit.jsonl
//! ```
//!
//! Everything is reloaded on open, so a restarted service answers the same
//! queries as before.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use palmwatch::detector::HealthAssessment;
use palmwatch::fieldsim::{CloudSink, SinkError};
use palmwatch::model::{
    AccelSample, CreatedBy, DeviceId, DeviceRecord, Digest, HealthStatus, Likelihood, ModelError,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::hub::{Hub, StreamEvent};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage I/O failed on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt record in {path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("device {0} already exists")]
    Exists(DeviceId),
    #[error(transparent)]
    Invalid(#[from] ModelError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotificationKind {
    StatusChange,
    DeviceAutoDetected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotificationRecord {
    pub id: u64,
    pub farm_id: String,
    pub kind: NotificationKind,
    pub payload: serde_json::Value,
    pub created_at: DateTime<Utc>,
    pub read: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditOutcome {
    Ok,
    Denied,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub id: u64,
    pub user_id: String,
    pub action: String,
    pub target: String,
    pub timestamp: DateTime<Utc>,
    pub outcome: AuditOutcome,
}

/// Where an ingest batch came from; unknown devices are registered here.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestOrigin {
    pub gateway_id: String,
    pub farm_id: String,
    pub cluster_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestOutcome {
    pub accepted: usize,
    pub duplicates: usize,
    pub auto_registered: Vec<DeviceId>,
}

/// Operator-editable device fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicePatch {
    pub farm_id: Option<String>,
    pub cluster_id: Option<String>,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub sensor_placement: Option<palmwatch::model::Placement>,
    pub sensors: Option<Vec<palmwatch::model::SensorKind>>,
    pub extra_sensors: Option<BTreeMap<String, f64>>,
}

struct DeviceState {
    record: DeviceRecord,
    fs_name: String,
    samples: BTreeMap<(i64, u64), AccelSample>,
    seqs: HashSet<u64>,
    assessments: Vec<HealthAssessment>,
    segment: Option<(String, File)>,
}

#[derive(Serialize, Deserialize)]
struct Index {
    devices: Vec<DeviceRecord>,
}

pub struct Store {
    dir: PathBuf,
    clock: Arc<dyn Clock>,
    hub: Arc<Hub>,
    devices: RwLock<BTreeMap<DeviceId, Arc<Mutex<DeviceState>>>>,
    index_lock: Mutex<()>,
    digests: Mutex<(BTreeSet<(DeviceId, i64)>, Vec<Digest>)>,
    notifications: Mutex<Vec<NotificationRecord>>,
    audit: Mutex<Vec<AuditEntry>>,
}

/// Filesystem-safe directory name for a device id.
fn fs_name(id: &DeviceId) -> String {
    let mut out = String::new();
    for b in id.as_str().bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn segment_key(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H").to_string()
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    // a torn final line from an interrupted append is cut off so later appends stay aligned
    let complete = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(complete as u64).map_err(io_err(path))?;
    }
    let mut out = Vec::new();
    for (i, line) in bytes[..complete].split(|b| *b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let v = serde_json::from_slice(line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

fn append_line<T: Serialize>(file: &mut File, path: &Path, value: &T) -> Result<(), StoreError> {
    let mut line = serde_json::to_vec(value).expect("record serializes");
    line.push(b'\n');
    file.write_all(&line).map_err(io_err(path))
}

fn append_to(path: &Path, value: &impl Serialize) -> Result<(), StoreError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    append_line(&mut f, path, value)
}

fn write_atomic(path: &Path, value: &impl Serialize) -> Result<(), StoreError> {
    let tmp = path.with_extension("json.tmp");
    let body = serde_json::to_vec_pretty(value).expect("document serializes");
    fs::write(&tmp, body).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl Store {
    /// Opens (or creates) a store, reloading everything already on disk.
    pub fn open(dir: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Arc<Self>, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(dir.join("samples")).map_err(io_err(&dir))?;

        let index_path = dir.join("index.json");
        let index: Index = match fs::read(&index_path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
                path: index_path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Index { devices: Vec::new() },
            Err(e) => return Err(io_err(&index_path)(e)),
        };

        let mut devices = BTreeMap::new();
        for record in index.devices {
            let name = fs_name(&record.device_id);
            let mut state = DeviceState {
                record,
                fs_name: name.clone(),
                samples: BTreeMap::new(),
                seqs: HashSet::new(),
                assessments: Vec::new(),
                segment: None,
            };
            let seg_dir = dir.join("samples").join(&name);
            if seg_dir.is_dir() {
                let mut segs: Vec<PathBuf> = fs::read_dir(&seg_dir)
                    .map_err(io_err(&seg_dir))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                    .collect();
                segs.sort();
                for seg in segs {
                    for s in read_jsonl::<AccelSample>(&seg)? {
                        if state.seqs.insert(s.seq) {
                            state.samples.insert((s.timestamp.timestamp_millis(), s.seq), s);
                        }
                    }
                }
            }
            devices.insert(state.record.device_id.clone(), state);
        }

        for a in read_jsonl::<HealthAssessment>(&dir.join("assessments.jsonl"))? {
            if let Some(d) = devices.get_mut(&a.device_id) {
                d.assessments.push(a);
            }
        }
        for d in devices.values_mut() {
            d.assessments.sort_by_key(|a| a.window_start);
        }

        let digests: Vec<Digest> = read_jsonl(&dir.join("digests.jsonl"))?;
        let digest_keys = digests
            .iter()
            .map(|d| (d.device_id.clone(), d.window_start.timestamp_millis()))
            .collect();

        let notes_path = dir.join("notifications.json");
        let notifications: Vec<NotificationRecord> = match fs::read(&notes_path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
                path: notes_path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&notes_path)(e)),
        };

        let audit = read_jsonl(&dir.join("audit.jsonl"))?;

        Ok(Arc::new(Self {
            dir,
            clock,
            hub: Hub::new(),
            devices: RwLock::new(
                devices
                    .into_iter()
                    .map(|(k, v)| (k, Arc::new(Mutex::new(v))))
                    .collect(),
            ),
            index_lock: Mutex::new(()),
            digests: Mutex::new((digest_keys, digests)),
            notifications: Mutex::new(notifications),
            audit: Mutex::new(audit),
        }))
    }

    pub fn hub(&self) -> &Arc<Hub> {
        &self.hub
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn device_state(&self, id: &DeviceId) -> Option<Arc<Mutex<DeviceState>>> {
        self.devices.read().expect("device map lock").get(id).cloned()
    }

    /// Rewrites `index.json` from the in-memory device records.
    pub fn flush(&self) -> Result<(), StoreError> {
        let _guard = self.index_lock.lock().expect("index lock");
        let states: Vec<_> = self.devices.read().expect("device map lock").values().cloned().collect();
        let devices = states
            .iter()
            .map(|s| s.lock().expect("device lock").record.clone())
            .collect();
        write_atomic(&self.dir.join("index.json"), &Index { devices })
    }

    pub fn device(&self, id: &DeviceId) -> Option<DeviceRecord> {
        self.device_state(id).map(|s| s.lock().expect("device lock").record.clone())
    }

    pub fn devices(&self) -> Vec<DeviceRecord> {
        let states: Vec<_> = self.devices.read().expect("device map lock").values().cloned().collect();
        states
            .iter()
            .map(|s| s.lock().expect("device lock").record.clone())
            .collect()
    }

    /// Adds a device. Returns `Exists` when the id is taken.
    pub fn create_device(&self, record: DeviceRecord) -> Result<DeviceRecord, StoreError> {
        record.validate()?;
        {
            let mut map = self.devices.write().expect("device map lock");
            if map.contains_key(&record.device_id) {
                return Err(StoreError::Exists(record.device_id));
            }
            map.insert(
                record.device_id.clone(),
                Arc::new(Mutex::new(DeviceState {
                    fs_name: fs_name(&record.device_id),
                    record: record.clone(),
                    samples: BTreeMap::new(),
                    seqs: HashSet::new(),
                    assessments: Vec::new(),
                    segment: None,
                })),
            );
        }
        if record.created_by == CreatedBy::GatewayAutoDetect {
            self.notify(
                &record.farm_id,
                NotificationKind::DeviceAutoDetected,
                serde_json::json!({
                    "device_id": record.device_id,
                    "cluster_id": record.cluster_id,
                }),
            )?;
        }
        self.flush()?;
        Ok(record)
    }

    pub fn update_device(&self, id: &DeviceId, patch: DevicePatch) -> Result<DeviceRecord, StoreError> {
        let state = self.device_state(id).ok_or_else(|| StoreError::UnknownDevice(id.clone()))?;
        let updated = {
            let mut st = state.lock().expect("device lock");
            let mut r = st.record.clone();
            if let Some(v) = patch.farm_id {
                r.farm_id = v;
            }
            if let Some(v) = patch.cluster_id {
                r.cluster_id = v;
            }
            if patch.latitude.is_some() {
                r.latitude = patch.latitude;
            }
            if patch.longitude.is_some() {
                r.longitude = patch.longitude;
            }
            if let Some(v) = patch.sensor_placement {
                r.sensor_placement = v;
            }
            if let Some(v) = patch.sensors {
                r.sensors = v;
            }
            if let Some(v) = patch.extra_sensors {
                r.extra_sensors = v;
            }
            r.validate()?;
            st.record = r.clone();
            r
        };
        self.flush()?;
        Ok(updated)
    }

    /// Stores new samples, skipping `(device_id, seq)` pairs already held.
    ///
    /// Unknown devices are registered under `origin` when one is given and
    /// rejected otherwise. Stored samples are published to the stream hub in
    /// storage order.
    pub fn ingest_samples(
        &self,
        batch: &[AccelSample],
        origin: Option<&IngestOrigin>,
    ) -> Result<IngestOutcome, StoreError> {
        let mut by_device: BTreeMap<&DeviceId, Vec<&AccelSample>> = BTreeMap::new();
        for s in batch {
            by_device.entry(&s.device_id).or_default().push(s);
        }
        let mut outcome = IngestOutcome::default();
        for (id, samples) in by_device {
            let state = match self.device_state(id) {
                Some(s) => s,
                None => {
                    let origin = origin.ok_or_else(|| StoreError::UnknownDevice(id.clone()))?;
                    let record = DeviceRecord {
                        device_id: id.clone(),
                        farm_id: origin.farm_id.clone(),
                        cluster_id: origin.cluster_id.clone(),
                        latitude: None,
                        longitude: None,
                        sensor_placement: palmwatch::model::Placement::Inside,
                        sensors: vec![palmwatch::model::SensorKind::Accelerometer],
                        status: HealthStatus::new(Likelihood::Low, self.clock.now()),
                        created_by: CreatedBy::GatewayAutoDetect,
                        extra_sensors: BTreeMap::new(),
                    };
                    match self.create_device(record) {
                        Ok(_) => outcome.auto_registered.push(id.clone()),
                        // registered concurrently by another batch
                        Err(StoreError::Exists(_)) => {}
                        Err(e) => return Err(e),
                    }
                    self.device_state(id).expect("device just registered")
                }
            };
            let mut st = state.lock().expect("device lock");
            let seg_dir = self.dir.join("samples").join(&st.fs_name);
            for s in samples {
                if st.seqs.contains(&s.seq) {
                    outcome.duplicates += 1;
                    continue;
                }
                let key = segment_key(&s.timestamp);
                let path = seg_dir.join(format!("{key}.jsonl"));
                if st.segment.as_ref().map(|(k, _)| k) != Some(&key) {
                    fs::create_dir_all(&seg_dir).map_err(io_err(&seg_dir))?;
                    let f = OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&path)
                        .map_err(io_err(&path))?;
                    st.segment = Some((key, f));
                }
                let (_, file) = st.segment.as_mut().expect("segment open");
                append_line(file, &path, s)?;
                st.seqs.insert(s.seq);
                st.samples.insert((s.timestamp.timestamp_millis(), s.seq), s.clone());
                self.hub.publish(&StreamEvent::Reading(s.clone()));
                outcome.accepted += 1;
            }
        }
        Ok(outcome)
    }

    /// Stores a digest once per `(device, window_start)`. Returns whether it was new.
    pub fn ingest_digest(&self, digest: &Digest) -> Result<bool, StoreError> {
        if self.device_state(&digest.device_id).is_none() {
            return Err(StoreError::UnknownDevice(digest.device_id.clone()));
        }
        let mut d = self.digests.lock().expect("digest lock");
        if !d.0.insert((digest.device_id.clone(), digest.window_start.timestamp_millis())) {
            return Ok(false);
        }
        append_to(&self.dir.join("digests.jsonl"), digest)?;
        d.1.push(digest.clone());
        Ok(true)
    }

    /// Stores an assessment once per `(device, window_start)`, updates the
    /// device status and raises a StatusChange notification when the
    /// likelihood differs from the current status.
    pub fn ingest_assessment(&self, assessment: &HealthAssessment) -> Result<bool, StoreError> {
        let state = self
            .device_state(&assessment.device_id)
            .ok_or_else(|| StoreError::UnknownDevice(assessment.device_id.clone()))?;
        let change = {
            let mut st = state.lock().expect("device lock");
            if st.assessments.iter().any(|a| a.window_start == assessment.window_start) {
                return Ok(false);
            }
            append_to(&self.dir.join("assessments.jsonl"), assessment)?;
            let at = st.assessments.partition_point(|a| a.window_start < assessment.window_start);
            let latest = at == st.assessments.len();
            st.assessments.insert(at, assessment.clone());
            self.hub.publish(&StreamEvent::Assessment(assessment.clone()));
            // a late assessment for an older window never overrides the current status
            let previous = st.record.status.likelihood;
            if latest {
                st.record.status = HealthStatus::new(assessment.likelihood, self.clock.now());
            }
            (latest && previous != assessment.likelihood).then(|| (st.record.farm_id.clone(), previous))
        };
        if let Some((farm, from)) = change {
            self.notify(
                &farm,
                NotificationKind::StatusChange,
                serde_json::json!({
                    "device_id": assessment.device_id,
                    "from": from,
                    "to": assessment.likelihood,
                    "window_start": assessment.window_start,
                }),
            )?;
        }
        self.flush()?;
        Ok(true)
    }

    /// Samples with `from <= timestamp < to`, in time order.
    pub fn readings(
        &self,
        id: &DeviceId,
        from: Option<DateTime<Utc>>,
        to: Option<DateTime<Utc>>,
    ) -> Option<Vec<AccelSample>> {
        let state = self.device_state(id)?;
        let st = state.lock().expect("device lock");
        let lo = from.map_or(i64::MIN, |t| t.timestamp_millis());
        let hi = to.map_or(i64::MAX, |t| t.timestamp_millis());
        if lo >= hi {
            return Some(Vec::new());
        }
        Some(st.samples.range((lo, 0)..(hi, 0)).map(|(_, s)| s.clone()).collect())
    }

    pub fn assessments(&self, id: &DeviceId) -> Option<Vec<HealthAssessment>> {
        let state = self.device_state(id)?;
        let st = state.lock().expect("device lock");
        Some(st.assessments.clone())
    }

    pub fn digests(&self) -> Vec<Digest> {
        self.digests.lock().expect("digest lock").1.clone()
    }

    /// Most recent digest for each listed device.
    pub fn latest_digests(&self, devices: &BTreeSet<DeviceId>) -> Vec<Digest> {
        let d = self.digests.lock().expect("digest lock");
        let mut latest: BTreeMap<&DeviceId, &Digest> = BTreeMap::new();
        for dg in d.1.iter().filter(|dg| devices.contains(&dg.device_id)) {
            let slot = latest.entry(&dg.device_id).or_insert(dg);
            if dg.window_start > slot.window_start {
                *slot = dg;
            }
        }
        latest.into_values().cloned().collect()
    }

    fn notify(&self, farm_id: &str, kind: NotificationKind, payload: serde_json::Value) -> Result<(), StoreError> {
        let mut notes = self.notifications.lock().expect("notification lock");
        let id = notes.last().map_or(1, |n| n.id + 1);
        notes.push(NotificationRecord {
            id,
            farm_id: farm_id.to_string(),
            kind,
            payload,
            created_at: self.clock.now(),
            read: false,
        });
        write_atomic(&self.dir.join("notifications.json"), &*notes)
    }

    pub fn notifications(&self, farms: &BTreeSet<String>) -> Vec<NotificationRecord> {
        self.notifications
            .lock()
            .expect("notification lock")
            .iter()
            .filter(|n| farms.contains(&n.farm_id))
            .cloned()
            .collect()
    }

    /// Marks notifications read; ids outside `farms` are ignored. Returns how many changed.
    pub fn mark_read(&self, ids: Option<&[u64]>, farms: &BTreeSet<String>) -> Result<usize, StoreError> {
        let mut notes = self.notifications.lock().expect("notification lock");
        let mut changed = 0;
        for n in notes.iter_mut() {
            let selected = ids.map_or(true, |ids| ids.contains(&n.id));
            if selected && !n.read && farms.contains(&n.farm_id) {
                n.read = true;
                changed += 1;
            }
        }
        if changed > 0 {
            write_atomic(&self.dir.join("notifications.json"), &*notes)?;
        }
        Ok(changed)
    }

    pub fn record_audit(
        &self,
        user_id: &str,
        action: &str,
        target: &str,
        outcome: AuditOutcome,
    ) -> Result<AuditEntry, StoreError> {
        let mut log = self.audit.lock().expect("audit lock");
        let entry = AuditEntry {
            id: log.last().map_or(1, |e| e.id + 1),
            user_id: user_id.to_string(),
            action: action.to_string(),
            target: target.to_string(),
            timestamp: self.clock.now(),
            outcome,
        };
        append_to(&self.dir.join("audit.jsonl"), &entry)?;
        log.push(entry.clone());
        Ok(entry)
    }

    pub fn audit(&self) -> Vec<AuditEntry> {
        self.audit.lock().expect("audit lock").clone()
    }
}

/// [`CloudSink`] adapter so a simulation can push straight into a store.
#[derive(Clone)]
pub struct StoreSink(pub Arc<Store>);

impl CloudSink for StoreSink {
    fn register_device(&mut self, record: &DeviceRecord) -> Result<(), SinkError> {
        match self.0.create_device(record.clone()) {
            Ok(_) | Err(StoreError::Exists(_)) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn ingest_samples(&mut self, batch: &[AccelSample]) -> Result<usize, SinkError> {
        Ok(self.0.ingest_samples(batch, None)?.accepted)
    }

    fn ingest_digest(&mut self, digest: &Digest) -> Result<(), SinkError> {
        self.0.ingest_digest(digest)?;
        Ok(())
    }

    fn ingest_assessment(&mut self, assessment: &HealthAssessment) -> Result<(), SinkError> {
        self.0.ingest_assessment(assessment)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    fn clock() -> Arc<dyn Clock> {
        Arc::new(ManualClock::new(DateTime::from_timestamp(1_559_376_000, 0).unwrap()))
    }

    fn origin() -> IngestOrigin {
        IngestOrigin {
            gateway_id: "gw".into(),
            farm_id: "f".into(),
            cluster_id: "c".into(),
        }
    }

    fn samples(dev: &str, seqs: std::ops::Range<u64>) -> Vec<AccelSample> {
        seqs.map(|i| {
            let t = DateTime::from_timestamp_millis(1_559_376_000_000 + i as i64 * 10).unwrap();
            AccelSample::new(dev.into(), i, t, 0.1, 0.2, 9.7 + (i % 7) as f64 * 0.01).unwrap()
        })
        .collect()
    }

    #[test]
    fn fs_names_are_safe() {
        assert_eq!(fs_name(&"palm-01_a".into()), "palm-01_a");
        assert_eq!(fs_name(&"../x y".into()), "%2E%2E%2Fx%20y");
    }

    #[test]
    fn replay_is_idempotent_and_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), clock()).unwrap();
        let batch = samples("d1", 0..100);
        let first = store.ingest_samples(&batch, Some(&origin())).unwrap();
        assert_eq!(first.accepted, 100);
        assert_eq!(first.auto_registered, vec![DeviceId::new("d1")]);
        let again = store.ingest_samples(&batch, Some(&origin())).unwrap();
        assert_eq!((again.accepted, again.duplicates), (0, 100));
        let before = store.readings(&"d1".into(), None, None).unwrap();
        drop(store);

        let reopened = Store::open(dir.path(), clock()).unwrap();
        assert_eq!(reopened.readings(&"d1".into(), None, None).unwrap(), before);
        assert_eq!(reopened.ingest_samples(&batch, Some(&origin())).unwrap().accepted, 0);
        let notes = reopened.notifications(&["f".to_string()].into());
        assert_eq!(notes.len(), 1);
        assert_eq!(notes[0].kind, NotificationKind::DeviceAutoDetected);
    }

    #[test]
    fn unknown_device_without_origin_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), clock()).unwrap();
        assert!(matches!(
            store.ingest_samples(&samples("d9", 0..3), None),
            Err(StoreError::UnknownDevice(_))
        ));
    }

    #[test]
    fn readings_range_is_half_open() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), clock()).unwrap();
        let batch = samples("d1", 0..10);
        store.ingest_samples(&batch, Some(&origin())).unwrap();
        let got = store
            .readings(&"d1".into(), Some(batch[2].timestamp), Some(batch[5].timestamp))
            .unwrap();
        assert_eq!(got.iter().map(|s| s.seq).collect::<Vec<_>>(), vec![2, 3, 4]);
        let empty = store
            .readings(&"d1".into(), Some(batch[5].timestamp), Some(batch[5].timestamp))
            .unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn torn_tail_is_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        fs::write(&path, "{\"id\":1,\"user_id\":\"a\",\"action\":\"x\",\"target\":\"y\",\"timestamp\":\"2019-06-01T08:00:00Z\",\"outcome\":\"ok\"}\n{\"id\":2,").unwrap();
        let store = Store::open(dir.path(), clock()).unwrap();
        assert_eq!(store.audit().len(), 1);
        store.record_audit("b", "POST /x", "/x", AuditOutcome::Ok).unwrap();
        drop(store);
        let ids: Vec<u64> = Store::open(dir.path(), clock()).unwrap().audit().iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![1, 2]);
    }
}
