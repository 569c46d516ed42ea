use std::collections::{BTreeMap, HashSet};

use crate::detector::HealthAssessment;
use crate::model::{AccelSample, DeviceId, DeviceRecord, Digest};

pub type SinkError = Box<dyn std::error::Error + Send + Sync>;

/// Destination for everything the field layers push upward.
///
/// Implementations must store each `(device_id, seq)` at most once and
/// return how many samples of a batch were newly stored.
pub trait CloudSink {
    fn register_device(&mut self, record: &DeviceRecord) -> Result<(), SinkError>;
    fn ingest_samples(&mut self, batch: &[AccelSample]) -> Result<usize, SinkError>;
    fn ingest_digest(&mut self, digest: &Digest) -> Result<(), SinkError>;
    fn ingest_assessment(&mut self, assessment: &HealthAssessment) -> Result<(), SinkError>;
}

/// In-memory cloud with exactly-once sample storage.
#[derive(Debug, Default)]
pub struct MemoryCloud {
    retain_samples: bool,
    seen: HashSet<(DeviceId, u64)>,
    pub stored: BTreeMap<DeviceId, u64>,
    pub samples: BTreeMap<DeviceId, Vec<AccelSample>>,
    pub devices: BTreeMap<DeviceId, DeviceRecord>,
    pub digests: Vec<Digest>,
    pub assessments: Vec<HealthAssessment>,
}

impl MemoryCloud {
    /// Counts and deduplicates samples without keeping them.
    pub fn counting() -> Self {
        Self::default()
    }

    /// Keeps every stored sample for later inspection.
    pub fn retaining() -> Self {
        Self {
            retain_samples: true,
            ..Self::default()
        }
    }
}

impl CloudSink for MemoryCloud {
    fn register_device(&mut self, record: &DeviceRecord) -> Result<(), SinkError> {
        self.devices.insert(record.device_id.clone(), record.clone());
        Ok(())
    }

    fn ingest_samples(&mut self, batch: &[AccelSample]) -> Result<usize, SinkError> {
        let mut accepted = 0;
        for s in batch {
            if self.seen.insert((s.device_id.clone(), s.seq)) {
                accepted += 1;
                *self.stored.entry(s.device_id.clone()).or_default() += 1;
                if self.retain_samples {
                    self.samples.entry(s.device_id.clone()).or_default().push(s.clone());
                }
            }
        }
        Ok(accepted)
    }

    fn ingest_digest(&mut self, digest: &Digest) -> Result<(), SinkError> {
        self.digests.push(digest.clone());
        Ok(())
    }

    fn ingest_assessment(&mut self, assessment: &HealthAssessment) -> Result<(), SinkError> {
        self.assessments.push(assessment.clone());
        Ok(())
    }
}
