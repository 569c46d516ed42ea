use std::collections::HashSet;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{AccelSample, CreatedBy, DeviceId, DeviceRecord, HealthStatus, Likelihood, Placement, SensorKind};

use super::{derive_seed, SimError};

/// Result of relaying one batch from the radio side.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardOutcome {
    pub to_edge: Vec<AccelSample>,
    pub to_cloud: Vec<AccelSample>,
    pub dropped: u64,
    /// Devices heard for the first time in this batch.
    pub registrations: Vec<DeviceRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayIdentity {
    pub gateway_id: String,
    pub farm_id: String,
    pub cluster_id: String,
}

/// Cluster gateway: a lossy radio hop followed by a reliable fan-out to the
/// edge and the cloud.
#[derive(Debug, Clone)]
pub struct Gateway {
    identity: GatewayIdentity,
    loss_probability: f64,
    known: HashSet<DeviceId>,
    rng: ChaCha8Rng,
}

impl Gateway {
    pub fn new(identity: GatewayIdentity, loss_probability: f64, seed: u64) -> Result<Self, SimError> {
        if !(0.0..1.0).contains(&loss_probability) {
            return Err(SimError::Invalid(format!(
                "loss_probability {loss_probability} for gateway {} must be in [0, 1)",
                identity.gateway_id
            )));
        }
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("gateway/{}", identity.gateway_id)));
        Ok(Self {
            identity,
            loss_probability,
            known: HashSet::new(),
            rng,
        })
    }

    pub fn identity(&self) -> &GatewayIdentity {
        &self.identity
    }

    /// Marks a device as already registered so it is not auto-detected.
    pub fn register(&mut self, device: DeviceId) {
        self.known.insert(device);
    }

    /// Drops each sample independently with the configured probability, then
    /// delivers survivors unchanged and in order to both destinations.
    pub fn forward(&mut self, batch: Vec<AccelSample>) -> ForwardOutcome {
        let mut out = ForwardOutcome::default();
        for sample in batch {
            if !self.known.contains(&sample.device_id) {
                self.known.insert(sample.device_id.clone());
                out.registrations
                    .push(self.auto_record(sample.device_id.clone(), sample.timestamp));
            }
            if self.loss_probability > 0.0 && self.rng.random::<f64>() < self.loss_probability {
                out.dropped += 1;
                continue;
            }
            out.to_edge.push(sample.clone());
            out.to_cloud.push(sample);
        }
        out
    }

    fn auto_record(&self, device_id: DeviceId, seen_at: DateTime<Utc>) -> DeviceRecord {
        DeviceRecord {
            device_id,
            farm_id: self.identity.farm_id.clone(),
            cluster_id: self.identity.cluster_id.clone(),
            latitude: None,
            longitude: None,
            // placement is not carried on the radio link; operators correct it later
            sensor_placement: Placement::Inside,
            sensors: vec![SensorKind::Accelerometer],
            status: HealthStatus::new(Likelihood::Low, seen_at),
            created_by: CreatedBy::GatewayAutoDetect,
            extra_sensors: Default::default(),
        }
    }
}
