use std::collections::VecDeque;
use std::f64::consts::PI;

use chrono::{DateTime, Utc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{AccelSample, DeviceId, Placement};

use super::derive_seed;

/// Parameters of the synthetic accelerometer signal.
///
/// Healthy samples are white Gaussian noise about `baseline_mean` on the
/// vertical axis. Once infested, the vertical axis also carries a constant
/// `activity_offset` plus Poisson-arriving, exponentially damped sinusoid
/// bursts with a uniformly drawn frequency in `burst_freq_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub baseline_mean: f64,
    pub baseline_std: f64,
    /// Burst arrivals per minute.
    pub burst_rate: f64,
    pub burst_freq_range: [f64; 2],
    pub burst_amplitude: f64,
    /// Seconds each burst lasts.
    pub burst_duration: f64,
    /// Envelope time constants per burst: the envelope is `exp(-decay * t / duration)`.
    pub burst_decay: f64,
    /// Mean shift added to the magnitude while infested.
    pub activity_offset: f64,
    /// Standard deviation of the independent horizontal-axis noise.
    pub lateral_noise_std: f64,
}

impl SignalModel {
    pub fn inside() -> Self {
        Self {
            baseline_mean: 9.74,
            baseline_std: 0.25,
            burst_rate: 300.0,
            burst_freq_range: [1.0, 8.0],
            burst_amplitude: 0.6,
            burst_duration: 0.5,
            burst_decay: 3.0,
            activity_offset: 0.20,
            lateral_noise_std: 0.01,
        }
    }

    pub fn outside() -> Self {
        Self {
            baseline_mean: 10.04,
            baseline_std: 0.06,
            burst_amplitude: 0.08,
            activity_offset: 0.04,
            ..Self::inside()
        }
    }

    pub fn for_placement(placement: Placement) -> Self {
        match placement {
            Placement::Inside => Self::inside(),
            Placement::Outside => Self::outside(),
        }
    }
}

/// Partial [`SignalModel`] used by configuration files to override defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalOverrides {
    pub baseline_mean: Option<f64>,
    pub baseline_std: Option<f64>,
    pub burst_rate: Option<f64>,
    pub burst_freq_range: Option<[f64; 2]>,
    pub burst_amplitude: Option<f64>,
    pub burst_duration: Option<f64>,
    pub burst_decay: Option<f64>,
    pub activity_offset: Option<f64>,
    pub lateral_noise_std: Option<f64>,
}

impl SignalOverrides {
    pub fn apply(&self, mut m: SignalModel) -> SignalModel {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { m.$f = v; } )* };
        }
        take!(
            baseline_mean,
            baseline_std,
            burst_rate,
            burst_freq_range,
            burst_amplitude,
            burst_duration,
            burst_decay,
            activity_offset,
            lateral_noise_std
        );
        m
    }
}

/// Timing of one generated stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub start: DateTime<Utc>,
    pub sample_rate_hz: f64,
    /// Seconds after `start` at which the palm becomes infested.
    pub infested_from_seconds: Option<f64>,
}

impl Default for StreamSpec {
    fn default() -> Self {
        Self {
            start: DateTime::<Utc>::from_timestamp(1_559_376_000, 0).expect("valid epoch"),
            sample_rate_hz: 100.0,
            infested_from_seconds: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Burst {
    start: f64,
    freq: f64,
    phase: f64,
}

/// Endless, deterministic sample generator for one device.
///
/// Noise and burst arrivals draw from separate seeded streams, so the healthy
/// part of an infested stream is identical to a healthy stream with the same seed.
#[derive(Debug, Clone)]
pub struct SensorStream {
    device_id: DeviceId,
    model: SignalModel,
    spec: StreamSpec,
    noise_rng: ChaCha8Rng,
    burst_rng: ChaCha8Rng,
    seq: u64,
    active: VecDeque<Burst>,
    next_burst: f64,
}

impl SensorStream {
    pub fn new(device_id: DeviceId, model: SignalModel, spec: StreamSpec, seed: u64) -> Self {
        let noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "noise"));
        let mut burst_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "burst"));
        let next_burst = match spec.infested_from_seconds {
            Some(onset) => onset + Self::gap(&model, &mut burst_rng),
            None => f64::INFINITY,
        };
        Self {
            device_id,
            model,
            spec,
            noise_rng,
            burst_rng,
            seq: 0,
            active: VecDeque::new(),
            next_burst,
        }
    }

    fn gap(model: &SignalModel, rng: &mut ChaCha8Rng) -> f64 {
        let per_second = model.burst_rate / 60.0;
        if per_second > 0.0 {
            Exp::new(per_second).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        }
    }

    pub fn device_id(&self) -> &DeviceId {
        &self.device_id
    }

    /// Next `count` samples.
    pub fn take_batch(&mut self, count: usize) -> Vec<AccelSample> {
        (0..count).map(|_| self.next_sample()).collect()
    }

    fn infested_at(&self, t: f64) -> bool {
        self.spec.infested_from_seconds.is_some_and(|onset| t >= onset)
    }

    fn burst_signal(&mut self, t: f64) -> f64 {
        while self.next_burst <= t {
            let [lo, hi] = self.model.burst_freq_range;
            let burst = Burst {
                start: self.next_burst,
                freq: if hi > lo { self.burst_rng.random_range(lo..hi) } else { lo },
                phase: self.burst_rng.random_range(0.0..2.0 * PI),
            };
            self.active.push_back(burst);
            self.next_burst += Self::gap(&self.model, &mut self.burst_rng);
        }
        let duration = self.model.burst_duration;
        while self.active.front().is_some_and(|b| t - b.start >= duration) {
            self.active.pop_front();
        }
        let decay = self.model.burst_decay / duration;
        self.active
            .iter()
            .filter(|b| t - b.start < duration)
            .map(|b| {
                let tau = t - b.start;
                self.model.burst_amplitude * (-decay * tau).exp() * (2.0 * PI * b.freq * tau + b.phase).sin()
            })
            .sum()
    }

    fn next_sample(&mut self) -> AccelSample {
        let seq = self.seq;
        self.seq += 1;
        let t = seq as f64 / self.spec.sample_rate_hz;
        let ms = (seq as f64 * 1000.0 / self.spec.sample_rate_hz).round() as i64;
        let timestamp = self.spec.start + chrono::Duration::milliseconds(ms);

        let gauss = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
        let mut az = self.model.baseline_mean + self.model.baseline_std * gauss(&mut self.noise_rng);
        let ax = self.model.lateral_noise_std * gauss(&mut self.noise_rng);
        let ay = self.model.lateral_noise_std * gauss(&mut self.noise_rng);
        if self.infested_at(t) {
            az += self.model.activity_offset + self.burst_signal(t);
        }
        AccelSample::new(self.device_id.clone(), seq, timestamp, ax, ay, az)
            .expect("generated axes are finite")
    }
}

impl Iterator for SensorStream {
    type Item = AccelSample;

    fn next(&mut self) -> Option<AccelSample> {
        Some(self.next_sample())
    }
}

/// Generates `duration_seconds` of samples at `spec.sample_rate_hz`, sequence
/// numbers starting at 0.
pub fn generate_stream(
    device_id: &DeviceId,
    model: &SignalModel,
    duration_seconds: f64,
    seed: u64,
    spec: &StreamSpec,
) -> Vec<AccelSample> {
    let count = (duration_seconds * spec.sample_rate_hz).round() as usize;
    SensorStream::new(device_id.clone(), model.clone(), spec.clone(), seed).take_batch(count)
}
