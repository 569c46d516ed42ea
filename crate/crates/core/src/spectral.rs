//! Frequency-domain fingerprints of accelerometer magnitude.
//!
//! Two estimators are provided, both Hann-tapered:
//!
//! * [`fft_spectrum`]: one-sided amplitude spectrum of a whole window,
//!   zero-padded to the next power of two and corrected by the window sum so
//!   that a unit-amplitude sine reads close to 1.0.
//! * [`welch_psd`]: averaged periodogram over overlapping segments, scaled to
//!   a one-sided density in (m/s²)²/Hz.
//!
//! Peaks above a relative threshold summarize either spectrum, and the
//! difference of peak averages between two recordings (PAD) is the spectral
//! infestation signal used by the detector.

use std::io::Write;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SampleWindow;

pub const DEFAULT_SEGMENT_LENGTH: usize = 2048;
pub const DEFAULT_OVERLAP: f64 = 0.5;
pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.6;
/// Band where larval activity is visible.
pub const ACTIVITY_BAND_HZ: (f64, f64) = (0.0, 10.0);

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("window length must be at least 1")]
    ZeroLength,
    #[error("empty input")]
    Empty,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("insufficient data: {got} samples, need at least {needed}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid spectral configuration: {0}")]
    Config(String),
    #[error("band [{lo}, {hi}] Hz is invalid for this spectrum")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("band [{lo}, {hi}] Hz contains no bins")]
    EmptyBand { lo: f64, hi: f64 },
    #[error("peak sets were computed with different spectral settings")]
    SettingsMismatch,
}

/// Symmetric Hann taper `0.5 - 0.5 cos(2πk/(n-1))`; `[1.0]` for `n == 1`.
pub fn hanning_window(n: usize) -> Result<Vec<f64>, SpectralError> {
    match n {
        0 => Err(SpectralError::ZeroLength),
        1 => Ok(vec![1.0]),
        _ => {
            let denom = (n - 1) as f64;
            Ok((0..n)
                .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / denom).cos())
                .collect())
        }
    }
}

fn check_finite(values: &[f64]) -> Result<(), SpectralError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SpectralError::NonFinite)
    }
}

fn mean(values: &[f64]) -> f64 {
    // a constant series must detrend to exact zeros, not summation residue
    match values.first() {
        Some(&first) if values.iter().all(|v| *v == first) => first,
        _ => values.iter().sum::<f64>() / values.len() as f64,
    }
}

/// Settings a peak set was derived under; peak sets are comparable only when equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralSettings {
    Fft {
        sample_rate_hz: f64,
        detrend: bool,
    },
    Welch {
        sample_rate_hz: f64,
        segment_length: usize,
        overlap_fraction: f64,
        detrend: bool,
        band_hz: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub sample_rate_hz: f64,
    pub n_fft: usize,
    /// Number of real samples before zero padding.
    pub n_samples: usize,
    pub detrend: bool,
    pub freqs: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// Amplitude spectrum of a window's magnitudes.
pub fn fft_spectrum(window: &SampleWindow, detrend: bool) -> Result<SpectrumResult, SpectralError> {
    fft_spectrum_of(&window.magnitudes(), window.sample_rate_hz, detrend)
}

/// Amplitude spectrum of a raw series sampled at `sample_rate_hz`.
///
/// Interior bins are scaled by `2/Σw`, the DC and Nyquist bins by `1/Σw`.
pub fn fft_spectrum_of(
    values: &[f64],
    sample_rate_hz: f64,
    detrend: bool,
) -> Result<SpectrumResult, SpectralError> {
    if values.is_empty() {
        return Err(SpectralError::Empty);
    }
    check_finite(values)?;
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(SpectralError::Config(format!("sample rate {sample_rate_hz}")));
    }
    let n = values.len();
    let n_fft = n.next_power_of_two();
    let window = hanning_window(n)?;
    let offset = if detrend { mean(values) } else { 0.0 };
    let window_sum: f64 = window.iter().sum();

    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .zip(&window)
        .map(|(v, w)| Complex::new((v - offset) * w, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);

    let half = n_fft / 2;
    let amplitudes: Vec<f64> = if window_sum > 0.0 {
        buf[..=half]
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let edge = k == 0 || k == half;
                let scale = if edge { 1.0 } else { 2.0 } / window_sum;
                c.norm() * scale
            })
            .collect()
    } else {
        // two-point Hann window is all zeros
        vec![0.0; half + 1]
    };
    let freqs = (0..=half)
        .map(|k| k as f64 * sample_rate_hz / n_fft as f64)
        .collect();
    let normalized = normalize(&amplitudes);
    Ok(SpectrumResult {
        sample_rate_hz,
        n_fft,
        n_samples: n,
        detrend,
        freqs,
        amplitudes,
        normalized,
    })
}

fn normalize(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        values.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; values.len()]
    }
}

impl SpectrumResult {
    /// Fraction of non-DC bins whose corrected amplitude exceeds `threshold`.
    pub fn fraction_above(&self, threshold: f64) -> f64 {
        let bins = &self.amplitudes[1.min(self.amplitudes.len())..];
        if bins.is_empty() {
            return 0.0;
        }
        bins.iter().filter(|&&a| a > threshold).count() as f64 / bins.len() as f64
    }

    pub fn peaks(&self, threshold_fraction: f64) -> PeakSet {
        let mut set = extract_peaks(&self.amplitudes, &self.freqs, threshold_fraction);
        set.settings = Some(SpectralSettings::Fft {
            sample_rate_hz: self.sample_rate_hz,
            detrend: self.detrend,
        });
        set
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_series_csv(w, &self.freqs, &self.amplitudes)
    }
}

/// Welch estimator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub detrend: bool,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            segment_length: DEFAULT_SEGMENT_LENGTH,
            overlap_fraction: DEFAULT_OVERLAP,
            detrend: true,
        }
    }
}

impl WelchConfig {
    fn step(&self) -> usize {
        let overlap = (self.segment_length as f64 * self.overlap_fraction).round() as usize;
        (self.segment_length - overlap).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdResult {
    pub sample_rate_hz: f64,
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub detrend: bool,
    pub segments: usize,
    /// Frequency range this result was restricted to.
    pub band_hz: [f64; 2],
    pub freqs: Vec<f64>,
    pub power_density: Vec<f64>,
}

pub fn welch_psd(window: &SampleWindow, config: &WelchConfig) -> Result<PsdResult, SpectralError> {
    welch_psd_of(&window.magnitudes(), window.sample_rate_hz, config)
}

/// Welch power spectral density of a raw series.
pub fn welch_psd_of(
    values: &[f64],
    sample_rate_hz: f64,
    config: &WelchConfig,
) -> Result<PsdResult, SpectralError> {
    let seg = config.segment_length;
    if seg < 2 {
        return Err(SpectralError::Config(format!("segment length {seg}")));
    }
    if !(0.0..1.0).contains(&config.overlap_fraction) {
        return Err(SpectralError::Config(format!(
            "overlap fraction {}",
            config.overlap_fraction
        )));
    }
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(SpectralError::Config(format!("sample rate {sample_rate_hz}")));
    }
    if values.len() < seg {
        return Err(SpectralError::InsufficientData {
            needed: seg,
            got: values.len(),
        });
    }
    check_finite(values)?;

    let window = hanning_window(seg)?;
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let step = config.step();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let half = seg / 2;
    let mut acc = vec![0.0f64; half + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    let mut segments = 0usize;

    let mut start = 0;
    while start + seg <= values.len() {
        let chunk = &values[start..start + seg];
        let offset = if config.detrend { mean(chunk) } else { 0.0 };
        for ((b, v), w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = Complex::new((v - offset) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        segments += 1;
        start += step;
    }

    let scale = 1.0 / (sample_rate_hz * window_power * segments as f64);
    let power_density = acc
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let one_sided = k != 0 && !(seg % 2 == 0 && k == half);
            p * scale * if one_sided { 2.0 } else { 1.0 }
        })
        .collect();
    let freqs = (0..=half)
        .map(|k| k as f64 * sample_rate_hz / seg as f64)
        .collect();

    Ok(PsdResult {
        sample_rate_hz,
        segment_length: seg,
        overlap_fraction: config.overlap_fraction,
        detrend: config.detrend,
        segments,
        band_hz: [0.0, sample_rate_hz / 2.0],
        freqs,
        power_density,
    })
}

impl PsdResult {
    pub fn bin_width(&self) -> f64 {
        self.sample_rate_hz / self.segment_length as f64
    }

    /// Rectangle-rule integral of the density over bins `lo..=hi`.
    pub fn band_power(&self, lo: usize, hi: usize) -> f64 {
        self.power_density[lo..=hi].iter().sum::<f64>() * self.bin_width()
    }

    pub fn total_power(&self) -> f64 {
        self.band_power(0, self.power_density.len() - 1)
    }

    pub fn settings(&self) -> SpectralSettings {
        SpectralSettings::Welch {
            sample_rate_hz: self.sample_rate_hz,
            segment_length: self.segment_length,
            overlap_fraction: self.overlap_fraction,
            detrend: self.detrend,
            band_hz: self.band_hz,
        }
    }

    pub fn peaks(&self, threshold_fraction: f64) -> PeakSet {
        let mut set = extract_peaks(&self.power_density, &self.freqs, threshold_fraction);
        set.settings = Some(self.settings());
        set
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_series_csv(w, &self.freqs, &self.power_density)
    }
}

/// Restricts a PSD to bins with `f_lo <= freq <= f_hi`.
pub fn band_slice(psd: &PsdResult, f_lo: f64, f_hi: f64) -> Result<PsdResult, SpectralError> {
    let nyquist = psd.sample_rate_hz / 2.0;
    if !(f_lo >= 0.0 && f_lo <= f_hi && f_hi <= nyquist) {
        return Err(SpectralError::InvalidBand { lo: f_lo, hi: f_hi });
    }
    let (freqs, power_density): (Vec<f64>, Vec<f64>) = psd
        .freqs
        .iter()
        .zip(&psd.power_density)
        .filter(|(f, _)| **f >= f_lo && **f <= f_hi)
        .unzip();
    if freqs.is_empty() {
        return Err(SpectralError::EmptyBand { lo: f_lo, hi: f_hi });
    }
    Ok(PsdResult {
        band_hz: [f_lo, f_hi],
        freqs,
        power_density,
        ..psd.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub freq_hz: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub threshold_fraction: f64,
    pub peaks: Vec<Peak>,
    pub peak_average: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<SpectralSettings>,
}

impl PeakSet {
    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }
}

/// Local maxima whose value reaches `threshold_fraction` of the global maximum.
///
/// A peak is higher than its left neighbour and higher than the first
/// differing value to its right; flat tops report their leftmost index. The
/// first and last bins are never peaks.
pub fn extract_peaks(values: &[f64], freqs: &[f64], threshold_fraction: f64) -> PeakSet {
    debug_assert_eq!(values.len(), freqs.len());
    let max = values.iter().copied().fold(0.0f64, f64::max);
    let mut peaks = Vec::new();
    if max > 0.0 {
        let cutoff = threshold_fraction * max;
        let mut i = 1;
        while i + 1 < values.len() {
            if values[i] > values[i - 1] {
                let mut j = i + 1;
                while j < values.len() && values[j] == values[i] {
                    j += 1;
                }
                if j < values.len() && values[j] < values[i] && values[i] >= cutoff {
                    peaks.push(Peak {
                        freq_hz: freqs[i],
                        value: values[i],
                    });
                }
                i = j;
            } else {
                i += 1;
            }
        }
    }
    let peak_average = if peaks.is_empty() {
        0.0
    } else {
        peaks.iter().map(|p| p.value).sum::<f64>() / peaks.len() as f64
    };
    PeakSet {
        threshold_fraction,
        peaks,
        peak_average,
        settings: None,
    }
}

/// Peak average after minus peak average before (PAD).
pub fn peaks_average_difference(after: &PeakSet, before: &PeakSet) -> Result<f64, SpectralError> {
    if after.threshold_fraction != before.threshold_fraction || after.settings != before.settings {
        return Err(SpectralError::SettingsMismatch);
    }
    Ok(after.peak_average - before.peak_average)
}

/// Writes a two-column `freq_hz,value` CSV.
pub fn write_series_csv<W: Write>(w: W, freqs: &[f64], values: &[f64]) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["freq_hz", "value"])?;
    for (f, v) in freqs.iter().zip(values) {
        out.write_record([f.to_string(), v.to_string()])?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn hann_examples() {
        assert_eq!(hanning_window(0), Err(SpectralError::ZeroLength));
        assert_eq!(hanning_window(1).unwrap(), vec![1.0]);
        let w3 = hanning_window(3).unwrap();
        assert!(w3[0].abs() < 1e-15 && (w3[1] - 1.0).abs() < 1e-15 && w3[2].abs() < 1e-15);
        let w8 = hanning_window(8).unwrap();
        for (k, w) in w8.iter().enumerate() {
            let direct = 0.5 * (1.0 - (2.0 * PI * k as f64 / 7.0).cos());
            assert!((w - direct).abs() < 1e-12);
            assert!((w - w8[7 - k]).abs() < 1e-12);
        }
        assert_eq!(w8[0], 0.0);
    }

    #[test]
    fn constant_signal_spectrum() {
        let x = vec![9.8; 1000];
        let raw = fft_spectrum_of(&x, 100.0, false).unwrap();
        assert_eq!(raw.n_fft, 1024);
        assert_eq!(raw.freqs.len(), 513);
        assert!((raw.amplitudes[0] - 9.8).abs() < 1e-9);
        // the taper's main lobe spans bins 0..=2; everything beyond it is leakage
        let leak = raw.amplitudes[3..].iter().copied().fold(0.0, f64::max);
        assert!(leak < 0.01 * raw.amplitudes[0], "leak {leak}");

        let detrended = fft_spectrum_of(&x, 100.0, true).unwrap();
        assert!(detrended.amplitudes.iter().all(|a| *a <= 1e-9));
    }

    #[test]
    fn empty_window_is_error() {
        assert_eq!(fft_spectrum_of(&[], 100.0, true), Err(SpectralError::Empty));
    }

    #[test]
    fn unit_sine_amplitude() {
        let x: Vec<f64> = (0..2048)
            .map(|i| (2.0 * PI * 5.0 * i as f64 / 100.0).sin())
            .collect();
        let s = fft_spectrum_of(&x, 100.0, true).unwrap();
        let (argmax, peak) = s
            .amplitudes
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &a)| if a > acc.1 { (i, a) } else { acc });
        let nearest = (5.0_f64 / (100.0 / 2048.0)).round() as usize;
        assert!(argmax.abs_diff(nearest) <= 1);
        // 5 Hz sits 0.4 bins off the grid; Hann scalloping costs at most 1.42 dB there
        assert!(peak <= 1.0 && peak >= 0.85, "peak {peak}");

        let bin_freq = 100.0 * 100.0 / 2048.0;
        let on_grid: Vec<f64> = (0..2048)
            .map(|i| (2.0 * PI * bin_freq * i as f64 / 100.0).sin())
            .collect();
        let s = fft_spectrum_of(&on_grid, 100.0, true).unwrap();
        assert!((s.amplitudes[100] - 1.0).abs() <= 0.05, "{}", s.amplitudes[100]);
    }

    #[test]
    fn welch_zero_signal() {
        let psd = welch_psd_of(&vec![0.0; 5000], 100.0, &WelchConfig::default()).unwrap();
        assert!(psd.power_density.iter().all(|p| *p == 0.0));
        assert_eq!(psd.segments, 3);
        assert_eq!(psd.freqs.len(), 1025);
    }

    #[test]
    fn welch_needs_one_segment() {
        assert_eq!(
            welch_psd_of(&vec![1.0; 2047], 100.0, &WelchConfig::default()),
            Err(SpectralError::InsufficientData { needed: 2048, got: 2047 })
        );
    }

    fn flat_psd() -> PsdResult {
        welch_psd_of(&vec![0.0; 2048], 100.0, &WelchConfig::default()).unwrap()
    }

    #[test]
    fn band_slice_examples() {
        let psd = flat_psd();
        assert_eq!(band_slice(&psd, 0.0, 50.0).unwrap().freqs, psd.freqs);
        // floor(10 / (100/2048)) + 1
        let low = band_slice(&psd, 0.0, 10.0).unwrap();
        assert_eq!(low.freqs.len(), 205);
        assert_eq!(low.band_hz, [0.0, 10.0]);
        let nyq = band_slice(&psd, 50.0, 50.0).unwrap();
        assert_eq!(nyq.freqs, vec![50.0]);
        assert!(matches!(
            band_slice(&psd, 10.01, 10.02),
            Err(SpectralError::EmptyBand { .. })
        ));
        assert!(matches!(band_slice(&psd, 5.0, 60.0), Err(SpectralError::InvalidBand { .. })));
    }

    fn idx_freqs(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn peak_examples() {
        let v = [0.0, 0.2, 1.0, 0.7, 0.1];
        let p = extract_peaks(&v, &idx_freqs(5), 0.6);
        assert_eq!(p.peaks, vec![Peak { freq_hz: 2.0, value: 1.0 }]);
        assert_eq!(p.peak_average, 1.0);

        let v = [0.0, 0.9, 0.1, 1.0, 0.0];
        let p = extract_peaks(&v, &idx_freqs(5), 0.6);
        assert_eq!(p.peaks.len(), 2);
        assert!((p.peak_average - 0.95).abs() < 1e-15);

        let p = extract_peaks(&[0.0; 6], &idx_freqs(6), 0.6);
        assert!(p.is_empty());
        assert_eq!(p.peak_average, 0.0);
    }

    #[test]
    fn plateau_takes_leftmost() {
        let v = [0.0, 1.0, 1.0, 1.0, 0.0, 0.5, 0.5];
        let p = extract_peaks(&v, &idx_freqs(7), 0.1);
        // trailing plateau never descends, so it is not a peak
        assert_eq!(p.peaks, vec![Peak { freq_hz: 1.0, value: 1.0 }]);
    }

    #[test]
    fn pad_examples() {
        let mk = |avg| PeakSet {
            threshold_fraction: 0.6,
            peaks: vec![],
            peak_average: avg,
            settings: None,
        };
        assert!((peaks_average_difference(&mk(1.05), &mk(0.85)).unwrap() - 0.20).abs() < 1e-12);
        assert_eq!(peaks_average_difference(&mk(0.7), &mk(0.7)).unwrap(), 0.0);
        let mut other = mk(0.7);
        other.threshold_fraction = 0.5;
        assert_eq!(
            peaks_average_difference(&mk(0.7), &other),
            Err(SpectralError::SettingsMismatch)
        );
    }

    #[test]
    fn pad_rejects_band_mismatch() {
        let psd = flat_psd();
        let a = band_slice(&psd, 0.0, 10.0).unwrap().peaks(0.6);
        let b = band_slice(&psd, 0.0, 20.0).unwrap().peaks(0.6);
        assert_eq!(peaks_average_difference(&a, &b), Err(SpectralError::SettingsMismatch));
        assert_eq!(peaks_average_difference(&a, &a), Ok(0.0));
    }

    proptest! {
        #[test]
        fn peaks_scale_invariant(values in proptest::collection::vec(0.0f64..10.0, 3..200), c in 0.01f64..100.0) {
            let freqs = idx_freqs(values.len());
            let a = extract_peaks(&values, &freqs, 0.6);
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            let b = extract_peaks(&scaled, &freqs, 0.6);
            let fa: Vec<f64> = a.peaks.iter().map(|p| p.freq_hz).collect();
            let fb: Vec<f64> = b.peaks.iter().map(|p| p.freq_hz).collect();
            prop_assert_eq!(fa, fb);
            let max = values.iter().copied().fold(0.0, f64::max);
            for (pa, pb) in a.peaks.iter().zip(&b.peaks) {
                prop_assert!((pa.value / max - pb.value / (max * c)).abs() < 1e-12);
                prop_assert!(pa.value >= 0.6 * max);
            }
        }

        #[test]
        fn pad_antisymmetric(x in -10.0f64..10.0, y in -10.0f64..10.0) {
            let mk = |avg| PeakSet { threshold_fraction: 0.6, peaks: vec![], peak_average: avg, settings: None };
            prop_assert_eq!(
                peaks_average_difference(&mk(x), &mk(y)).unwrap(),
                -peaks_average_difference(&mk(y), &mk(x)).unwrap()
            );
        }

        #[test]
        fn normalized_in_unit_range(values in proptest::collection::vec(-5.0f64..5.0, 1..300)) {
            let s = fft_spectrum_of(&values, 100.0, true).unwrap();
            prop_assert_eq!(s.freqs.len(), s.n_fft / 2 + 1);
            prop_assert!(s.freqs.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.normalized.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
