//! Deterministic farm / gateway / edge simulator.
//!
//! Every device produces a seeded synthetic stream. Each cluster gateway
//! drops samples on the radio hop, then hands survivors to its edge node and
//! to the cloud sink. Edges emit digests (and, optionally, assessments) when
//! an interval closes. The run advances in one-second logical ticks on a
//! single thread, so identical configurations yield identical output.

mod accounting;
mod cloud;
mod config;
mod edge;
mod gateway;
mod signal;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CreatedBy, DeviceId, DeviceRecord, HealthStatus, Likelihood, SensorKind};

pub use accounting::{packet_accounting, PacketStats, PacketTally};
pub use cloud::{CloudSink, MemoryCloud, SinkError};
pub use config::{ClusterSpec, DeviceSpec, EdgeSettings, FarmSpec, SimConfig};
pub use edge::{edge_digest, EdgeDetection, EdgeNode, EdgeOutput};
pub use gateway::{ForwardOutcome, Gateway, GatewayIdentity};
pub use signal::{generate_stream, SensorStream, SignalModel, SignalOverrides, StreamSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Parse(String),
    #[error("invalid simulation config: {0}")]
    Invalid(String),
    #[error("cloud sink failed: {0}")]
    Sink(#[from] SinkError),
}

/// Mixes a run seed with a label into an independent sub-seed (FNV-1a + SplitMix64).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-device counters for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceCounters {
    pub generated: u64,
    pub dropped: u64,
    pub delivered_edge: u64,
    pub delivered_cloud: u64,
    pub stored: u64,
    pub digests: u64,
    pub assessments: u64,
    pub packets: Option<PacketStats>,
    #[serde(skip)]
    tally: PacketTally,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub simulated_seconds: u64,
    pub devices: BTreeMap<DeviceId, DeviceCounters>,
    pub auto_registered: Vec<DeviceId>,
}

struct DeviceRuntime {
    id: DeviceId,
    stream: SensorStream,
}

struct ClusterRuntime {
    gateway: Gateway,
    edge: EdgeNode,
    devices: Vec<DeviceRuntime>,
}

/// A configured, resumable simulation.
pub struct Simulation {
    config: SimConfig,
    clusters: Vec<ClusterRuntime>,
    registered: bool,
    elapsed: u64,
    report: SimReport,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut clusters = Vec::new();
        let mut report = SimReport {
            seed: config.seed,
            ..Default::default()
        };
        for farm in &config.farms {
            for cluster in &farm.clusters {
                let identity = GatewayIdentity {
                    gateway_id: cluster.gateway_id.clone(),
                    farm_id: farm.farm_id.clone(),
                    cluster_id: cluster.cluster_id.clone(),
                };
                let mut gateway = Gateway::new(identity, cluster.loss_probability, config.seed)?;
                let detection = config.edge.detection.then(|| EdgeDetection {
                    config: config.edge.detector.clone(),
                    baseline_windows: config.edge.baseline_windows,
                    placements: cluster
                        .devices
                        .iter()
                        .map(|d| (d.device_id.clone(), d.placement))
                        .collect(),
                });
                let edge = EdgeNode::new(
                    config.start,
                    config.digest_interval_seconds,
                    config.sample_rate_hz,
                    detection,
                );
                let devices = cluster
                    .devices
                    .iter()
                    .map(|d| {
                        if !d.auto_detect {
                            gateway.register(d.device_id.clone());
                        }
                        report.devices.insert(d.device_id.clone(), DeviceCounters::default());
                        let spec = StreamSpec {
                            start: config.start,
                            sample_rate_hz: config.sample_rate_hz,
                            infested_from_seconds: d.infested_from_seconds,
                        };
                        let seed = derive_seed(config.seed, &format!("device/{}", d.device_id));
                        DeviceRuntime {
                            id: d.device_id.clone(),
                            stream: SensorStream::new(d.device_id.clone(), d.signal_model(), spec, seed),
                        }
                    })
                    .collect();
                clusters.push(ClusterRuntime {
                    gateway,
                    edge,
                    devices,
                });
            }
        }
        Ok(Self {
            config,
            clusters,
            registered: false,
            elapsed: 0,
            report,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Records for the devices operators registered up front.
    pub fn manual_registrations(&self) -> Vec<DeviceRecord> {
        self.config
            .devices()
            .filter(|(_, _, d)| !d.auto_detect)
            .map(|(farm, cluster, d)| DeviceRecord {
                device_id: d.device_id.clone(),
                farm_id: farm.farm_id.clone(),
                cluster_id: cluster.cluster_id.clone(),
                latitude: d.latitude,
                longitude: d.longitude,
                sensor_placement: d.placement,
                sensors: vec![SensorKind::Accelerometer],
                status: HealthStatus::new(Likelihood::Low, self.config.start),
                created_by: CreatedBy::Manual,
                extra_sensors: Default::default(),
            })
            .collect()
    }

    fn deliver_edge(outputs: Vec<EdgeOutput>, sink: &mut dyn CloudSink, report: &mut SimReport) -> Result<(), SimError> {
        for o in outputs {
            match o {
                EdgeOutput::Digest(d) => {
                    sink.ingest_digest(&d)?;
                    if let Some(c) = report.devices.get_mut(&d.device_id) {
                        c.digests += 1;
                    }
                }
                EdgeOutput::Assessment(a) => {
                    sink.ingest_assessment(&a)?;
                    if let Some(c) = report.devices.get_mut(&a.device_id) {
                        c.assessments += 1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Advances the simulation by `seconds` of simulated time.
    pub fn advance(&mut self, seconds: u64, sink: &mut dyn CloudSink) -> Result<(), SimError> {
        if !self.registered {
            for rec in self.manual_registrations() {
                sink.register_device(&rec)?;
            }
            self.registered = true;
        }
        let per_tick = self.config.sample_rate_hz.round() as usize;
        let pace = (self.config.time_compression > 0.0)
            .then(|| Duration::from_secs_f64(1.0 / self.config.time_compression));
        let wall_start = Instant::now();

        for tick in 0..seconds {
            for cluster in &mut self.clusters {
                for device in &mut cluster.devices {
                    let batch = device.stream.take_batch(per_tick);
                    let outcome = cluster.gateway.forward(batch);
                    for rec in &outcome.registrations {
                        sink.register_device(rec)?;
                        self.report.auto_registered.push(rec.device_id.clone());
                    }
                    let edge_out = cluster.edge.receive(&outcome.to_edge);
                    Self::deliver_edge(edge_out, sink, &mut self.report)?;
                    let stored = sink.ingest_samples(&outcome.to_cloud)?;

                    let c = self.report.devices.get_mut(&device.id).expect("device counters");
                    c.generated += per_tick as u64;
                    c.dropped += outcome.dropped;
                    c.delivered_edge += outcome.to_edge.len() as u64;
                    c.delivered_cloud += outcome.to_cloud.len() as u64;
                    c.stored += stored as u64;
                    for s in &outcome.to_cloud {
                        c.tally.observe(s.seq);
                    }
                }
            }
            self.elapsed += 1;
            if let Some(pace) = pace {
                let due = pace * (tick as u32 + 1);
                if let Some(wait) = due.checked_sub(wall_start.elapsed()) {
                    std::thread::sleep(wait);
                }
            }
        }
        Ok(())
    }

    /// Closes open edge intervals and returns the run report.
    pub fn finish(mut self, sink: &mut dyn CloudSink) -> Result<SimReport, SimError> {
        for cluster in &mut self.clusters {
            let out = cluster.edge.flush();
            Self::deliver_edge(out, sink, &mut self.report)?;
        }
        self.report.simulated_seconds = self.elapsed;
        for c in self.report.devices.values_mut() {
            c.packets = c.tally.stats();
        }
        Ok(self.report)
    }

    /// Runs `seconds` of simulated time from the start and finishes.
    pub fn run(config: SimConfig, seconds: u64, sink: &mut dyn CloudSink) -> Result<SimReport, SimError> {
        let mut sim = Self::new(config)?;
        sim.advance(seconds, sink)?;
        sim.finish(sink)
    }
}
