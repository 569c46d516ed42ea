//! Domain types shared by ingestion, analysis, simulation and the service.
//!
//! All accelerations are in m/s². Timestamps are UTC with millisecond
//! precision and serialize as RFC 3339 strings (`2019-06-01T10:00:00.010Z`).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised when constructing domain values.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("rejected sample: non-finite acceleration component ({ax}, {ay}, {az})")]
    NonFinite { ax: f64, ay: f64, az: f64 },
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
}

/// Opaque device identifier. Cheap to clone; serializes as a plain string.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(Arc<str>);

impl DeviceId {
    pub fn new(id: impl AsRef<str>) -> Self {
        Self(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl From<&str> for DeviceId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

impl From<String> for DeviceId {
    fn from(s: String) -> Self {
        Self(Arc::from(s))
    }
}

/// Millisecond-precision RFC 3339 (de)serialization for UTC timestamps.
pub mod ts_millis {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&raw)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// Euclidean norm of a three-axis acceleration.
pub fn magnitude_of(ax: f64, ay: f64, az: f64) -> Result<f64, ModelError> {
    if !(ax.is_finite() && ay.is_finite() && az.is_finite()) {
        return Err(ModelError::NonFinite { ax, ay, az });
    }
    Ok((ax * ax + ay * ay + az * az).sqrt())
}

/// One timestamped three-axis accelerometer reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub device_id: DeviceId,
    pub seq: u64,
    #[serde(with = "ts_millis")]
    pub timestamp: DateTime<Utc>,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub magnitude: f64,
}

impl AccelSample {
    /// Builds a sample, computing the magnitude from the axes.
    pub fn new(
        device_id: DeviceId,
        seq: u64,
        timestamp: DateTime<Utc>,
        ax: f64,
        ay: f64,
        az: f64,
    ) -> Result<Self, ModelError> {
        let magnitude = magnitude_of(ax, ay, az)?;
        Ok(Self {
            device_id,
            seq,
            timestamp,
            ax,
            ay,
            az,
            magnitude,
        })
    }
}

/// One device's cleaned samples over a nominal time span (one hour by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWindow {
    pub device_id: DeviceId,
    #[serde(with = "ts_millis")]
    pub window_start: DateTime<Utc>,
    pub nominal_duration: f64,
    pub sample_rate_hz: f64,
    pub samples: Vec<AccelSample>,
}

impl SampleWindow {
    pub const DEFAULT_DURATION_SECONDS: f64 = 3600.0;
    pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;

    pub fn magnitudes(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.magnitude).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn window_end(&self) -> DateTime<Utc> {
        self.window_start + chrono::Duration::milliseconds((self.nominal_duration * 1000.0) as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Inside,
    Outside,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Inside => "inside",
            Placement::Outside => "outside",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Accelerometer,
    Temperature,
    Humidity,
    Ph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreatedBy {
    Manual,
    GatewayAutoDetect,
}

/// Infestation likelihood, ordered from least to most severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HealthLevel {
    Healthy,
    Suspect,
    Infested,
}

impl HealthLevel {
    /// Display color used by map markers and table rows.
    pub fn color(self) -> &'static str {
        match self {
            HealthLevel::Healthy => "green",
            HealthLevel::Suspect => "yellow",
            HealthLevel::Infested => "red",
        }
    }
}

impl From<Likelihood> for HealthLevel {
    fn from(l: Likelihood) -> Self {
        match l {
            Likelihood::Low => HealthLevel::Healthy,
            Likelihood::Medium => HealthLevel::Suspect,
            Likelihood::High => HealthLevel::Infested,
        }
    }
}

/// Current health of one palm. `level` is always derived from `likelihood`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthStatus {
    pub level: HealthLevel,
    pub likelihood: Likelihood,
    #[serde(with = "ts_millis")]
    pub updated_at: DateTime<Utc>,
}

impl HealthStatus {
    pub fn new(likelihood: Likelihood, updated_at: DateTime<Utc>) -> Self {
        Self {
            level: likelihood.into(),
            likelihood,
            updated_at,
        }
    }

    pub fn color(&self) -> &'static str {
        self.level.color()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub device_id: DeviceId,
    pub farm_id: String,
    pub cluster_id: String,
    /// Absent for devices auto-detected by a gateway until an operator places them.
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub sensor_placement: Placement,
    pub sensors: Vec<SensorKind>,
    pub status: HealthStatus,
    pub created_by: CreatedBy,
    /// Free-form readings from non-accelerometer sensors (temperature, humidity, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_sensors: BTreeMap<String, f64>,
}

impl DeviceRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        validate_coordinates(self.latitude, self.longitude)
    }
}

pub fn validate_coordinates(lat: Option<f64>, lon: Option<f64>) -> Result<(), ModelError> {
    if let Some(lat) = lat {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(ModelError::Latitude(lat));
        }
    }
    if let Some(lon) = lon {
        if !(-180.0..=180.0).contains(&lon) {
            return Err(ModelError::Longitude(lon));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmRecord {
    pub farm_id: String,
    pub name: String,
    pub owners: Vec<String>,
    /// One cluster per gateway.
    pub clusters: Vec<String>,
}

/// Edge-side summary of one device over one digest interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Digest {
    pub device_id: DeviceId,
    #[serde(with = "ts_millis")]
    pub window_start: DateTime<Utc>,
    pub count: u64,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn magnitude_examples() {
        assert_eq!(magnitude_of(3.0, 4.0, 12.0).unwrap(), 13.0);
        assert_eq!(magnitude_of(0.0, 0.0, 9.81).unwrap(), 9.81);
        assert_eq!(magnitude_of(1.0, 2.0, 2.0).unwrap(), 3.0);
    }

    #[test]
    fn magnitude_rejects_non_finite() {
        assert!(matches!(
            magnitude_of(f64::NAN, 0.0, 1.0),
            Err(ModelError::NonFinite { .. })
        ));
        assert!(magnitude_of(0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn level_follows_likelihood() {
        let now = Utc::now();
        assert_eq!(HealthStatus::new(Likelihood::Low, now).color(), "green");
        assert_eq!(HealthStatus::new(Likelihood::Medium, now).color(), "yellow");
        assert_eq!(HealthStatus::new(Likelihood::High, now).color(), "red");
    }

    #[test]
    fn coordinates_bounds() {
        assert!(validate_coordinates(Some(24.7), Some(46.6)).is_ok());
        assert_eq!(
            validate_coordinates(Some(95.0), Some(0.0)),
            Err(ModelError::Latitude(95.0))
        );
        assert!(validate_coordinates(Some(0.0), Some(-181.0)).is_err());
        assert!(validate_coordinates(None, None).is_ok());
    }

    #[test]
    fn sample_wire_shape() {
        let t = DateTime::parse_from_rfc3339("2019-06-01T10:00:00.010Z")
            .unwrap()
            .with_timezone(&Utc);
        let s = AccelSample::new("p1".into(), 42, t, 0.1, 0.2, 9.8).unwrap();
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["device_id"], "p1");
        assert_eq!(v["timestamp"], "2019-06-01T10:00:00.010Z");
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 7);
    }

    fn axis() -> impl Strategy<Value = f64> {
        -1e3f64..1e3
    }

    proptest! {
        #[test]
        fn magnitude_symmetries(x in axis(), y in axis(), z in axis()) {
            let m = magnitude_of(x, y, z).unwrap();
            prop_assert!(m >= 0.0);
            let tol = 1e-12 * m.max(1.0);
            for p in [magnitude_of(y, z, x), magnitude_of(z, x, y), magnitude_of(y, x, z)] {
                prop_assert!((p.unwrap() - m).abs() <= tol);
            }
            prop_assert_eq!(magnitude_of(-x, y, -z).unwrap(), m);
            let direct = (x * x + y * y + z * z).sqrt();
            prop_assert!((direct - m).abs() <= 1e-9 * m.max(1e-300));
        }

        #[test]
        fn sample_json_round_trip(seq in 0u64..u64::MAX / 2, ms in 0i64..4_000_000_000_000,
                                  x in axis(), y in axis(), z in axis()) {
            let t = DateTime::<Utc>::from_timestamp_millis(ms).unwrap();
            let s = AccelSample::new("dev-7".into(), seq, t, x, y, z).unwrap();
            let back: AccelSample = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
