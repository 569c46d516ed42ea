//! `palmwatch simulate`: deterministic farm runs written to disk.
//!
//! Output layout:
//!
//! ```text
//! <output>/streams/<device_id>.jsonl   cloud-stored samples, one JSON object per line
//! <output>/devices.json                device registrations in arrival order
//! <output>/digests.jsonl               edge digests
//! <output>/assessments.jsonl           edge assessments (when edge detection is on)
//! <output>/summary.json                per-device counters and likelihood tallies
//! ```
//!
//! Identical configuration and seed produce byte-identical files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use palmwatch::fieldsim::{CloudSink, DeviceCounters, SimConfig, SimError, Simulation, SinkError};
use palmwatch::model::{AccelSample, DeviceId, DeviceRecord, Digest, Likelihood};
use palmwatch::HealthAssessment;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Simulation config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Simulated time to run, e.g. `3600`, `90m` or `6h`.
    #[arg(long, value_parser = parse_duration)]
    pub duration: Duration,
    /// Directory for the run's files; created if missing.
    #[arg(long)]
    pub output: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Seconds as a bare integer, or any humantime duration.
pub fn parse_duration(s: &str) -> Result<Duration, String> {
    if let Ok(secs) = s.parse::<u64>() {
        return Ok(Duration::from_secs(secs));
    }
    humantime::parse_duration(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub simulated_seconds: u64,
    pub devices: BTreeMap<DeviceId, DeviceCounters>,
    pub auto_registered: Vec<DeviceId>,
    pub assessments: BTreeMap<Likelihood, u64>,
}

struct StreamFile {
    out: BufWriter<File>,
    last_seq: Option<u64>,
}

/// Writes what the simulated cloud receives straight to files.
struct FileSink {
    dir: PathBuf,
    streams: BTreeMap<DeviceId, StreamFile>,
    devices: Vec<DeviceRecord>,
    digests: BufWriter<File>,
    assessments: BufWriter<File>,
    likelihoods: BTreeMap<Likelihood, u64>,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

fn write_line<T: Serialize>(out: &mut impl Write, value: &T) -> Result<(), SinkError> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

impl FileSink {
    fn new(dir: &Path) -> Result<Self, CliError> {
        let streams = dir.join("streams");
        fs::create_dir_all(&streams).map_err(CliError::io(&streams))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            streams: BTreeMap::new(),
            devices: Vec::new(),
            digests: create(&dir.join("digests.jsonl"))?,
            assessments: create(&dir.join("assessments.jsonl"))?,
            likelihoods: BTreeMap::new(),
        })
    }

    fn stream(&mut self, id: &DeviceId) -> Result<&mut StreamFile, SinkError> {
        if !self.streams.contains_key(id) {
            let name: String = id
                .as_str()
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect();
            let path = self.dir.join("streams").join(format!("{name}.jsonl"));
            let out = BufWriter::new(File::create(&path)?);
            self.streams.insert(id.clone(), StreamFile { out, last_seq: None });
        }
        Ok(self.streams.get_mut(id).expect("just inserted"))
    }

    fn finish(mut self) -> Result<BTreeMap<Likelihood, u64>, CliError> {
        let io = |e: std::io::Error| CliError::Io {
            path: self.dir.clone(),
            source: e,
        };
        for s in self.streams.values_mut() {
            s.out.flush().map_err(io)?;
        }
        self.digests.flush().map_err(io)?;
        self.assessments.flush().map_err(io)?;
        let path = self.dir.join("devices.json");
        let text = serde_json::to_string_pretty(&self.devices).expect("records serialize");
        fs::write(&path, text + "\n").map_err(CliError::io(path))?;
        Ok(self.likelihoods)
    }
}

impl CloudSink for FileSink {
    fn register_device(&mut self, record: &DeviceRecord) -> Result<(), SinkError> {
        if !self.devices.iter().any(|d| d.device_id == record.device_id) {
            self.devices.push(record.clone());
        }
        Ok(())
    }

    fn ingest_samples(&mut self, batch: &[AccelSample]) -> Result<usize, SinkError> {
        let mut stored = 0;
        for s in batch {
            let stream = self.stream(&s.device_id)?;
            // per-device sequence numbers arrive strictly increasing
            if stream.last_seq.is_some_and(|last| s.seq <= last) {
                continue;
            }
            stream.last_seq = Some(s.seq);
            write_line(&mut stream.out, s)?;
            stored += 1;
        }
        Ok(stored)
    }

    fn ingest_digest(&mut self, digest: &Digest) -> Result<(), SinkError> {
        write_line(&mut self.digests, digest)
    }

    fn ingest_assessment(&mut self, assessment: &HealthAssessment) -> Result<(), SinkError> {
        *self.likelihoods.entry(assessment.likelihood).or_default() += 1;
        write_line(&mut self.assessments, assessment)
    }
}

fn config_error(e: SimError) -> CliError {
    match e {
        SimError::Parse(_) | SimError::Invalid(_) => CliError::Config(e.to_string()),
        SimError::Sink(e) => CliError::Input(format!("writing simulation output: {e}")),
    }
}

/// Runs the simulation described by `args` and writes its output files.
pub fn simulate(args: &SimulateArgs) -> Result<RunSummary, CliError> {
    let mut config = SimConfig::from_path(&args.config).map_err(config_error)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let mut sink = FileSink::new(&args.output)?;
    let report = Simulation::run(config, args.duration.as_secs(), &mut sink).map_err(config_error)?;
    let assessments = sink.finish()?;

    let summary = RunSummary {
        seed: report.seed,
        simulated_seconds: report.simulated_seconds,
        devices: report.devices,
        auto_registered: report.auto_registered,
        assessments,
    };
    let path = args.output.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(CliError::io(path))?;
    Ok(summary)
}
