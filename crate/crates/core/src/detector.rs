//! Per-device infestation assessment against a healthy baseline.
//!
//! Four indicators are evaluated for each window:
//!
//! | key             | fires when                                                          |
//! |-----------------|---------------------------------------------------------------------|
//! | `fft_level`     | share of non-DC FFT bins above `fft_abs_threshold` > `fft_fraction` |
//! | `psd_pad`       | PSD peak-average difference in the activity band > `pad_min`        |
//! | `whisker_ratio` | whisker span / baseline whisker span >= `whisker_ratio_min`         |
//! | `mean_shift`    | \|mean - baseline mean\| >= `mean_shift_sigmas` x baseline std      |
//!
//! The number of fired indicators maps to a likelihood through [`classify`].

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ts_millis, DeviceId, Likelihood, Placement, SampleWindow};
use crate::spectral::{
    self, band_slice, fft_spectrum_of, peaks_average_difference, welch_psd_of, PeakSet,
    SpectralError, WelchConfig,
};
use crate::stats::{summarize_values, StatSummary, StatsError};

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("insufficient baseline: no healthy windows supplied")]
    InsufficientBaseline,
    #[error("baseline for {baseline:?} placement cannot assess a {window:?} window")]
    PlacementMismatch {
        baseline: Placement,
        window: Placement,
    },
    #[error("baseline belongs to device {baseline}, window to {window}")]
    DeviceMismatch { baseline: DeviceId, window: DeviceId },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Detector thresholds; a flat key/value document with every key optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub fft_abs_threshold: f64,
    pub fft_fraction: f64,
    /// Disable to skip the absolute-amplitude indicator (e.g. outside placements).
    pub fft_level_enabled: bool,
    pub pad_min: f64,
    pub whisker_ratio_min: f64,
    pub mean_shift_sigmas: f64,
    pub peak_threshold: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub detrend: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            fft_abs_threshold: 0.004,
            fft_fraction: 0.10,
            fft_level_enabled: true,
            pad_min: 0.0,
            whisker_ratio_min: 1.3,
            mean_shift_sigmas: 0.5,
            peak_threshold: spectral::DEFAULT_PEAK_THRESHOLD,
            band_low_hz: spectral::ACTIVITY_BAND_HZ.0,
            band_high_hz: spectral::ACTIVITY_BAND_HZ.1,
            segment_length: spectral::DEFAULT_SEGMENT_LENGTH,
            overlap_fraction: spectral::DEFAULT_OVERLAP,
            detrend: true,
        }
    }
}

impl DetectorConfig {
    pub fn welch(&self) -> WelchConfig {
        WelchConfig {
            segment_length: self.segment_length,
            overlap_fraction: self.overlap_fraction,
            detrend: self.detrend,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Activity-band PSD peaks, or `None` when the series is shorter than one segment.
    fn band_peaks(&self, values: &[f64], sample_rate_hz: f64) -> Result<Option<PeakSet>, SpectralError> {
        match welch_psd_of(values, sample_rate_hz, &self.welch()) {
            Ok(psd) => {
                let band = band_slice(&psd, self.band_low_hz, self.band_high_hz)?;
                Ok(Some(band.peaks(self.peak_threshold)))
            }
            Err(SpectralError::InsufficientData { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Healthy-state reference for one device at one placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineProfile {
    pub device_id: DeviceId,
    pub placement: Placement,
    pub stat: StatSummary,
    /// `None` when the healthy data is shorter than one PSD segment.
    pub psd_peaks: Option<PeakSet>,
    pub fft_peaks: PeakSet,
    #[serde(with = "ts_millis")]
    pub established_at: DateTime<Utc>,
    pub source_window_count: usize,
}

/// Builds a baseline from windows known to be healthy.
pub fn build_baseline(
    device_id: &DeviceId,
    placement: Placement,
    healthy_windows: &[SampleWindow],
    config: &DetectorConfig,
) -> Result<BaselineProfile, DetectorError> {
    let first = healthy_windows.first().ok_or(DetectorError::InsufficientBaseline)?;
    let sample_rate_hz = first.sample_rate_hz;
    let values: Vec<f64> = healthy_windows
        .iter()
        .flat_map(|w| w.samples.iter().map(|s| s.magnitude))
        .collect();
    let minutes = healthy_windows.iter().map(|w| w.nominal_duration).sum::<f64>() / 60.0;
    let stat = summarize_values(&values, minutes)?;
    let fft_peaks = fft_spectrum_of(&values, sample_rate_hz, config.detrend)?.peaks(config.peak_threshold);
    let psd_peaks = config.band_peaks(&values, sample_rate_hz)?;
    let established_at = healthy_windows
        .iter()
        .map(SampleWindow::window_end)
        .max()
        .unwrap_or(first.window_start);
    Ok(BaselineProfile {
        device_id: device_id.clone(),
        placement,
        stat,
        psd_peaks,
        fft_peaks,
        established_at,
        source_window_count: healthy_windows.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorOutcome {
    pub fired: bool,
    pub evaluable: bool,
    /// Raw measurement, recorded whether or not the indicator fired.
    pub value: Option<f64>,
    pub threshold: f64,
}

impl IndicatorOutcome {
    fn not_evaluable(threshold: f64) -> Self {
        Self {
            fired: false,
            evaluable: false,
            value: None,
            threshold,
        }
    }

    fn measured(value: f64, threshold: f64, fired: bool) -> Self {
        Self {
            fired,
            evaluable: true,
            value: Some(value),
            threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indicators {
    pub fft_level: IndicatorOutcome,
    pub psd_pad: IndicatorOutcome,
    pub whisker_ratio: IndicatorOutcome,
    pub mean_shift: IndicatorOutcome,
}

impl Indicators {
    pub fn fired_count(&self) -> u8 {
        [&self.fft_level, &self.psd_pad, &self.whisker_ratio, &self.mean_shift]
            .iter()
            .filter(|i| i.fired)
            .count() as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthAssessment {
    pub device_id: DeviceId,
    #[serde(with = "ts_millis")]
    pub window_start: DateTime<Utc>,
    pub indicators: Indicators,
    pub fired_count: u8,
    pub likelihood: Likelihood,
}

impl HealthAssessment {
    fn from_indicators(device_id: DeviceId, window_start: DateTime<Utc>, indicators: Indicators) -> Self {
        let fired_count = indicators.fired_count();
        Self {
            device_id,
            window_start,
            indicators,
            fired_count,
            likelihood: classify(fired_count),
        }
    }
}

/// Fired-indicator count to likelihood: 0-1 low, 2 medium, 3+ high.
pub fn classify(fired_count: u8) -> Likelihood {
    match fired_count {
        0 | 1 => Likelihood::Low,
        2 => Likelihood::Medium,
        _ => Likelihood::High,
    }
}

fn whisker_indicator(current: &StatSummary, baseline: &StatSummary, config: &DetectorConfig) -> IndicatorOutcome {
    let min = config.whisker_ratio_min;
    if baseline.whisker_span > 0.0 {
        let ratio = current.whisker_span / baseline.whisker_span;
        IndicatorOutcome::measured(ratio, min, ratio >= min)
    } else if current.whisker_span > 0.0 {
        // any spread over a zero-spread baseline
        IndicatorOutcome {
            fired: true,
            evaluable: true,
            value: None,
            threshold: min,
        }
    } else {
        IndicatorOutcome::measured(1.0, min, 1.0 >= min)
    }
}

fn mean_shift_indicator(current: &StatSummary, baseline: &StatSummary, config: &DetectorConfig) -> IndicatorOutcome {
    let shift = (current.mean - baseline.mean).abs();
    let threshold = config.mean_shift_sigmas * baseline.std;
    IndicatorOutcome::measured(shift, threshold, shift > 0.0 && shift >= threshold)
}

/// Assessment from summary statistics alone; spectral indicators are marked
/// not evaluable.
pub fn assess_summaries(
    device_id: DeviceId,
    window_start: DateTime<Utc>,
    current: &StatSummary,
    baseline: &StatSummary,
    config: &DetectorConfig,
) -> HealthAssessment {
    let indicators = Indicators {
        fft_level: IndicatorOutcome::not_evaluable(config.fft_fraction),
        psd_pad: IndicatorOutcome::not_evaluable(config.pad_min),
        whisker_ratio: whisker_indicator(current, baseline, config),
        mean_shift: mean_shift_indicator(current, baseline, config),
    };
    HealthAssessment::from_indicators(device_id, window_start, indicators)
}

/// Evaluates all four indicators for one cleaned window.
pub fn assess_window(
    window: &SampleWindow,
    placement: Placement,
    baseline: &BaselineProfile,
    config: &DetectorConfig,
) -> Result<HealthAssessment, DetectorError> {
    if placement != baseline.placement {
        return Err(DetectorError::PlacementMismatch {
            baseline: baseline.placement,
            window: placement,
        });
    }
    if window.device_id != baseline.device_id {
        return Err(DetectorError::DeviceMismatch {
            baseline: baseline.device_id.clone(),
            window: window.device_id.clone(),
        });
    }
    let values = window.magnitudes();
    let current = summarize_values(&values, window.nominal_duration / 60.0)?;

    let fft_level = if config.fft_level_enabled {
        let spectrum = fft_spectrum_of(&values, window.sample_rate_hz, config.detrend)?;
        let share = spectrum.fraction_above(config.fft_abs_threshold);
        IndicatorOutcome::measured(share, config.fft_fraction, share > config.fft_fraction)
    } else {
        IndicatorOutcome::not_evaluable(config.fft_fraction)
    };

    let psd_pad = match (config.band_peaks(&values, window.sample_rate_hz)?, &baseline.psd_peaks) {
        (Some(now), Some(before)) => {
            let pad = peaks_average_difference(&now, before)?;
            IndicatorOutcome::measured(pad, config.pad_min, pad > config.pad_min)
        }
        _ => IndicatorOutcome::not_evaluable(config.pad_min),
    };

    let indicators = Indicators {
        fft_level,
        psd_pad,
        whisker_ratio: whisker_indicator(&current, &baseline.stat, config),
        mean_shift: mean_shift_indicator(&current, &baseline.stat, config),
    };
    Ok(HealthAssessment::from_indicators(
        window.device_id.clone(),
        window.window_start,
        indicators,
    ))
}

/// Baselines keyed by device and placement. Reads share; recalibration
/// replaces a profile atomically.
#[derive(Debug, Default)]
pub struct BaselineStore {
    profiles: RwLock<HashMap<(DeviceId, Placement), Arc<BaselineProfile>>>,
}

impl BaselineStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, device: &DeviceId, placement: Placement) -> Option<Arc<BaselineProfile>> {
        self.profiles
            .read()
            .expect("baseline store poisoned")
            .get(&(device.clone(), placement))
            .cloned()
    }

    /// Installs a profile, returning the one it replaced.
    pub fn replace(&self, profile: BaselineProfile) -> Option<Arc<BaselineProfile>> {
        let key = (profile.device_id.clone(), profile.placement);
        self.profiles
            .write()
            .expect("baseline store poisoned")
            .insert(key, Arc::new(profile))
    }

    pub fn len(&self) -> usize {
        self.profiles.read().expect("baseline store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
