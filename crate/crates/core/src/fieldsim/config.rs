//! Declarative simulation configuration (TOML).
//!
//! ```toml
//! seed = 42
//! sample_rate_hz = 100.0          # default 100
//! digest_interval_seconds = 3600  # default 3600
//! time_compression = 0.0          # simulated s per real s; 0 = as fast as possible
//! start = "2019-06-01T08:00:00Z"
//!
//! [edge]
//! detection = true                # run the detector at the edge
//! baseline_windows = 1            # closed intervals used as each device's baseline
//! [edge.detector]                 # any DetectorConfig key
//! whisker_ratio_min = 1.3
//!
//! [[farms]]
//! farm_id = "farm-a"
//! name = "North grove"
//! owners = ["alice"]
//!
//! [[farms.clusters]]
//! cluster_id = "c1"
//! gateway_id = "gw-1"
//! loss_probability = 0.1          # radio loss, in [0, 1)
//!
//! [[farms.clusters.devices]]
//! device_id = "palm-001"
//! placement = "inside"            # inside | outside
//! latitude = 25.38
//! longitude = 49.59
//! infested_from_seconds = 10800   # optional onset
//! auto_detect = false             # true: unknown to the gateway until first heard
//! [farms.clusters.devices.signal] # optional SignalModel overrides
//! burst_amplitude = 0.6
//! ```
//!
//! Field-level validation failures are reported with the line and column of
//! the offending value.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize};

use crate::detector::DetectorConfig;
use crate::model::{DeviceId, Placement};

use super::signal::{SignalModel, SignalOverrides};
use super::SimError;

fn default_rate() -> f64 {
    100.0
}

fn default_interval() -> f64 {
    3600.0
}

fn default_start() -> DateTime<Utc> {
    DateTime::<Utc>::from_timestamp(1_559_376_000, 0).expect("valid epoch")
}

fn de_probability<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let p = f64::deserialize(d)?;
    if (0.0..1.0).contains(&p) {
        Ok(p)
    } else {
        Err(serde::de::Error::custom(format!(
            "loss_probability {p} must be in [0, 1)"
        )))
    }
}

fn de_positive<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(serde::de::Error::custom(format!("{v} must be positive")))
    }
}

fn de_non_negative<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(serde::de::Error::custom(format!("{v} must be non-negative")))
    }
}

fn de_onset<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    de_non_negative(d).map(Some)
}

fn de_latitude<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    let v = f64::deserialize(d)?;
    if (-90.0..=90.0).contains(&v) {
        Ok(Some(v))
    } else {
        Err(serde::de::Error::custom(format!("latitude {v} outside [-90, 90]")))
    }
}

fn de_longitude<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    let v = f64::deserialize(d)?;
    if (-180.0..=180.0).contains(&v) {
        Ok(Some(v))
    } else {
        Err(serde::de::Error::custom(format!("longitude {v} outside [-180, 180]")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    #[serde(default = "default_rate", deserialize_with = "de_positive")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_interval", deserialize_with = "de_positive")]
    pub digest_interval_seconds: f64,
    #[serde(default, deserialize_with = "de_non_negative")]
    pub time_compression: f64,
    #[serde(default = "default_start")]
    pub start: DateTime<Utc>,
    #[serde(default)]
    pub edge: EdgeSettings,
    pub farms: Vec<FarmSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeSettings {
    pub detection: bool,
    pub baseline_windows: usize,
    pub detector: DetectorConfig,
}

impl Default for EdgeSettings {
    fn default() -> Self {
        Self {
            detection: true,
            baseline_windows: 1,
            detector: DetectorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarmSpec {
    pub farm_id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub owners: Vec<String>,
    pub clusters: Vec<ClusterSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub cluster_id: String,
    pub gateway_id: String,
    #[serde(default, deserialize_with = "de_probability")]
    pub loss_probability: f64,
    pub devices: Vec<DeviceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub device_id: DeviceId,
    pub placement: Placement,
    #[serde(default, deserialize_with = "de_latitude")]
    pub latitude: Option<f64>,
    #[serde(default, deserialize_with = "de_longitude")]
    pub longitude: Option<f64>,
    #[serde(default, deserialize_with = "de_onset")]
    pub infested_from_seconds: Option<f64>,
    #[serde(default)]
    pub auto_detect: bool,
    #[serde(default)]
    pub signal: SignalOverrides,
}

impl DeviceSpec {
    pub fn signal_model(&self) -> SignalModel {
        self.signal.apply(SignalModel::for_placement(self.placement))
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            SimError::Parse(msg) => SimError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Cross-field checks that cannot be expressed per value.
    pub fn validate(&self) -> Result<(), SimError> {
        let mut devices = BTreeSet::new();
        let mut clusters = BTreeSet::new();
        let mut gateways = BTreeSet::new();
        for farm in &self.farms {
            for cluster in &farm.clusters {
                if !(0.0..1.0).contains(&cluster.loss_probability) {
                    return Err(SimError::Invalid(format!(
                        "cluster {}: loss_probability {} must be in [0, 1)",
                        cluster.cluster_id, cluster.loss_probability
                    )));
                }
                if !clusters.insert(cluster.cluster_id.as_str()) {
                    return Err(SimError::Invalid(format!("duplicate cluster_id {}", cluster.cluster_id)));
                }
                if !gateways.insert(cluster.gateway_id.as_str()) {
                    return Err(SimError::Invalid(format!("duplicate gateway_id {}", cluster.gateway_id)));
                }
                for d in &cluster.devices {
                    if !devices.insert(d.device_id.clone()) {
                        return Err(SimError::Invalid(format!("duplicate device_id {}", d.device_id)));
                    }
                    let m = d.signal_model();
                    if !(m.baseline_std >= 0.0 && m.burst_rate >= 0.0 && m.burst_duration > 0.0) {
                        return Err(SimError::Invalid(format!(
                            "device {}: signal parameters must be non-negative with positive burst_duration",
                            d.device_id
                        )));
                    }
                    if m.burst_freq_range[0] > m.burst_freq_range[1] {
                        return Err(SimError::Invalid(format!(
                            "device {}: burst_freq_range must be ascending",
                            d.device_id
                        )));
                    }
                }
            }
        }
        if self.edge.detection && self.edge.baseline_windows == 0 {
            return Err(SimError::Invalid("edge.baseline_windows must be at least 1".into()));
        }
        Ok(())
    }

    pub fn devices(&self) -> impl Iterator<Item = (&FarmSpec, &ClusterSpec, &DeviceSpec)> {
        self.farms.iter().flat_map(|f| {
            f.clusters
                .iter()
                .flat_map(move |c| c.devices.iter().map(move |d| (f, c, d)))
        })
    }
}
