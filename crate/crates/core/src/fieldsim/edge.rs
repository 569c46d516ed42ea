use std::collections::BTreeMap;

use chrono::{DateTime, Utc};

use crate::detector::{assess_window, build_baseline, BaselineProfile, DetectorConfig, HealthAssessment};
use crate::model::{AccelSample, DeviceId, Digest, Placement, SampleWindow};

/// Running min/mean/max over one interval.
#[derive(Debug, Clone, Copy)]
struct Accumulator {
    count: u64,
    sum: f64,
    min: f64,
    max: f64,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            count: 0,
            sum: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    fn digest(&self, device_id: DeviceId, window_start: DateTime<Utc>) -> Option<Digest> {
        (self.count > 0).then(|| Digest {
            device_id,
            window_start,
            count: self.count,
            min: self.min,
            mean: self.sum / self.count as f64,
            max: self.max,
        })
    }
}

fn interval_index(origin: DateTime<Utc>, interval_ms: i64, t: DateTime<Utc>) -> i64 {
    (t - origin).num_milliseconds().div_euclid(interval_ms)
}

fn interval_start(origin: DateTime<Utc>, interval_ms: i64, idx: i64) -> DateTime<Utc> {
    origin + chrono::Duration::milliseconds(idx * interval_ms)
}

/// Batch form of the edge summary: one digest per device per non-empty
/// interval, intervals counted from `origin`.
pub fn edge_digest(samples: &[AccelSample], origin: DateTime<Utc>, interval_seconds: f64) -> Vec<Digest> {
    let interval_ms = (interval_seconds * 1000.0).round() as i64;
    let mut acc: BTreeMap<(DeviceId, i64), Accumulator> = BTreeMap::new();
    for s in samples {
        let idx = interval_index(origin, interval_ms, s.timestamp);
        acc.entry((s.device_id.clone(), idx))
            .or_insert_with(Accumulator::new)
            .push(s.magnitude);
    }
    acc.into_iter()
        .filter_map(|((dev, idx), a)| a.digest(dev, interval_start(origin, interval_ms, idx)))
        .collect()
}

/// What the edge sends upstream.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeOutput {
    Digest(Digest),
    Assessment(HealthAssessment),
}

/// Local detection settings for an edge node.
#[derive(Debug, Clone)]
pub struct EdgeDetection {
    pub config: DetectorConfig,
    /// Leading closed windows per device used to establish the baseline.
    pub baseline_windows: usize,
    pub placements: BTreeMap<DeviceId, Placement>,
}

#[derive(Debug)]
struct DeviceState {
    current: Option<i64>,
    acc: Accumulator,
    buffer: Vec<AccelSample>,
    healthy: Vec<SampleWindow>,
    baseline: Option<BaselineProfile>,
}

impl DeviceState {
    fn new() -> Self {
        Self {
            current: None,
            acc: Accumulator::new(),
            buffer: Vec::new(),
            healthy: Vec::new(),
            baseline: None,
        }
    }
}

/// Edge node: digests each device's delivered stream per interval and,
/// when configured, assesses closed intervals against a learned baseline.
#[derive(Debug)]
pub struct EdgeNode {
    origin: DateTime<Utc>,
    interval_ms: i64,
    sample_rate_hz: f64,
    detection: Option<EdgeDetection>,
    devices: BTreeMap<DeviceId, DeviceState>,
}

impl EdgeNode {
    pub fn new(
        origin: DateTime<Utc>,
        interval_seconds: f64,
        sample_rate_hz: f64,
        detection: Option<EdgeDetection>,
    ) -> Self {
        Self {
            origin,
            interval_ms: (interval_seconds * 1000.0).round() as i64,
            sample_rate_hz,
            detection,
            devices: BTreeMap::new(),
        }
    }

    /// Consumes a delivered batch; emits outputs for every interval it closes.
    pub fn receive(&mut self, batch: &[AccelSample]) -> Vec<EdgeOutput> {
        let mut out = Vec::new();
        for s in batch {
            let idx = interval_index(self.origin, self.interval_ms, s.timestamp);
            let state = self
                .devices
                .entry(s.device_id.clone())
                .or_insert_with(DeviceState::new);
            if let Some(current) = state.current {
                if idx != current {
                    Self::close(
                        &s.device_id,
                        state,
                        self.origin,
                        self.interval_ms,
                        self.sample_rate_hz,
                        self.detection.as_ref(),
                        &mut out,
                    );
                }
            }
            state.current = Some(idx);
            state.acc.push(s.magnitude);
            if self.detection.is_some() {
                state.buffer.push(s.clone());
            }
        }
        out
    }

    /// Closes every open interval (end of run).
    pub fn flush(&mut self) -> Vec<EdgeOutput> {
        let mut out = Vec::new();
        for (device, state) in self.devices.iter_mut() {
            if state.current.is_some() {
                Self::close(
                    device,
                    state,
                    self.origin,
                    self.interval_ms,
                    self.sample_rate_hz,
                    self.detection.as_ref(),
                    &mut out,
                );
            }
        }
        out
    }

    fn close(
        device: &DeviceId,
        state: &mut DeviceState,
        origin: DateTime<Utc>,
        interval_ms: i64,
        sample_rate_hz: f64,
        detection: Option<&EdgeDetection>,
        out: &mut Vec<EdgeOutput>,
    ) {
        let Some(idx) = state.current.take() else {
            return;
        };
        let start = interval_start(origin, interval_ms, idx);
        if let Some(d) = state.acc.digest(device.clone(), start) {
            out.push(EdgeOutput::Digest(d));
        }
        state.acc = Accumulator::new();

        let Some(det) = detection else {
            return;
        };
        let window = SampleWindow {
            device_id: device.clone(),
            window_start: start,
            nominal_duration: interval_ms as f64 / 1000.0,
            sample_rate_hz,
            samples: std::mem::take(&mut state.buffer),
        };
        let placement = det.placements.get(device).copied().unwrap_or(Placement::Inside);
        match &state.baseline {
            None => {
                state.healthy.push(window);
                if state.healthy.len() >= det.baseline_windows.max(1) {
                    let healthy = std::mem::take(&mut state.healthy);
                    // a degenerate baseline (too few samples) keeps learning
                    match build_baseline(device, placement, &healthy, &det.config) {
                        Ok(b) => state.baseline = Some(b),
                        Err(_) => state.healthy = healthy,
                    }
                }
            }
            Some(baseline) => {
                if let Ok(a) = assess_window(&window, placement, baseline, &det.config) {
                    out.push(EdgeOutput::Assessment(a));
                }
            }
        }
    }
}
