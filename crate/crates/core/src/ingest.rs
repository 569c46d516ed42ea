//! Raw log parsing, outlier cleaning and hourly segmentation.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{magnitude_of, AccelSample, DeviceId, SampleWindow};

/// Default cleaning bounds in m/s².
pub const DEFAULT_LOWER_BOUND: f64 = 6.0;
pub const DEFAULT_UPPER_BOUND: f64 = 17.0;

/// Relative tolerance used when a CSV row carries its own magnitude column.
const MAGNITUDE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error reading telemetry: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt input: {malformed} of {total} rows malformed")]
    Corrupt { malformed: u64, total: u64 },
    #[error("invalid cleaning bounds: lower {lower} must be below upper {upper}")]
    Bounds { lower: f64, upper: f64 },
    #[error("unknown log format {0:?} (expected csv or jsonl)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Csv,
    Jsonl,
}

impl LogFormat {
    /// Guesses the format from a file extension, `jsonl`/`json`/`ndjson` or `csv`.
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "jsonl" | "ndjson" | "json" => Some(Self::Jsonl),
            _ => None,
        }
    }
}

impl std::str::FromStr for LogFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(IngestError::UnknownFormat(other.to_string())),
        }
    }
}

/// Row accounting for one parse/clean pass.
///
/// `total_in == kept + dropped_low + dropped_high + dropped_malformed` always holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub total_in: u64,
    pub kept: u64,
    pub dropped_low: u64,
    pub dropped_high: u64,
    pub dropped_malformed: u64,
}

impl CleaningReport {
    pub fn is_balanced(&self) -> bool {
        self.total_in == self.kept + self.dropped_low + self.dropped_high + self.dropped_malformed
    }

    /// Combines a parse report with the subsequent cleaning report.
    pub fn merge_parse(parse: CleaningReport, clean: CleaningReport) -> CleaningReport {
        CleaningReport {
            total_in: parse.total_in,
            kept: clean.kept,
            dropped_low: clean.dropped_low,
            dropped_high: clean.dropped_high,
            dropped_malformed: parse.dropped_malformed,
        }
    }
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw.trim())
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

fn parse_csv_record(rec: &csv::StringRecord) -> Option<AccelSample> {
    if rec.len() != 6 && rec.len() != 7 {
        return None;
    }
    let device_id = rec.get(0)?.trim();
    if device_id.is_empty() {
        return None;
    }
    let seq: u64 = rec.get(1)?.trim().parse().ok()?;
    let timestamp = parse_timestamp(rec.get(2)?)?;
    let axis = |i: usize| -> Option<f64> { rec.get(i)?.trim().parse::<f64>().ok() };
    let (ax, ay, az) = (axis(3)?, axis(4)?, axis(5)?);
    let sample = AccelSample::new(DeviceId::new(device_id), seq, timestamp, ax, ay, az).ok()?;
    if rec.len() == 7 {
        let logged = axis(6)?;
        if !magnitude_matches(logged, sample.magnitude) {
            return None;
        }
    }
    Some(sample)
}

fn magnitude_matches(logged: f64, computed: f64) -> bool {
    logged.is_finite() && (logged - computed).abs() <= MAGNITUDE_TOLERANCE * computed.abs().max(f64::MIN_POSITIVE)
}

fn parse_json_line(line: &str) -> Option<AccelSample> {
    let s: AccelSample = serde_json::from_str(line).ok()?;
    let computed = magnitude_of(s.ax, s.ay, s.az).ok()?;
    magnitude_matches(s.magnitude, computed).then_some(s)
}

fn looks_like_header(rec: &csv::StringRecord) -> bool {
    rec.get(1).is_some_and(|f| f.trim() == "seq")
}

/// Parses a telemetry log into samples, counting malformed rows.
///
/// CSV rows are `device_id,seq,timestamp_iso8601,ax,ay,az[,magnitude]`; an
/// optional header row is skipped. JSONL lines are canonical sample objects.
/// Blank lines are ignored. More than half the rows malformed is an error.
pub fn parse_log<R: Read>(
    reader: R,
    format: LogFormat,
) -> Result<(Vec<AccelSample>, CleaningReport), IngestError> {
    let mut samples = Vec::new();
    let mut report = CleaningReport::default();

    match format {
        LogFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(reader);
            let mut first = true;
            for rec in rdr.records() {
                let rec = match rec {
                    Ok(r) => r,
                    Err(e) => match e.into_kind() {
                        csv::ErrorKind::Io(io) => return Err(IngestError::Io(io)),
                        _ => {
                            report.total_in += 1;
                            report.dropped_malformed += 1;
                            continue;
                        }
                    },
                };
                if std::mem::take(&mut first) && looks_like_header(&rec) {
                    continue;
                }
                if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
                    continue;
                }
                report.total_in += 1;
                match parse_csv_record(&rec) {
                    Some(s) => samples.push(s),
                    None => report.dropped_malformed += 1,
                }
            }
        }
        LogFormat::Jsonl => {
            for line in BufReader::new(reader).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                report.total_in += 1;
                match parse_json_line(&line) {
                    Some(s) => samples.push(s),
                    None => report.dropped_malformed += 1,
                }
            }
        }
    }

    report.kept = samples.len() as u64;
    if report.dropped_malformed * 2 > report.total_in {
        return Err(IngestError::Corrupt {
            malformed: report.dropped_malformed,
            total: report.total_in,
        });
    }
    Ok((samples, report))
}

/// Drops samples whose magnitude falls outside `[lower, upper]`.
///
/// Values equal to a bound are kept. Order is preserved and the operation is
/// idempotent.
pub fn clean_outliers(
    samples: Vec<AccelSample>,
    lower: f64,
    upper: f64,
) -> Result<(Vec<AccelSample>, CleaningReport), IngestError> {
    if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
        return Err(IngestError::Bounds { lower, upper });
    }
    let mut report = CleaningReport {
        total_in: samples.len() as u64,
        ..Default::default()
    };
    let kept: Vec<_> = samples
        .into_iter()
        .filter(|s| {
            if s.magnitude < lower {
                report.dropped_low += 1;
                false
            } else if s.magnitude > upper {
                report.dropped_high += 1;
                false
            } else if s.magnitude.is_nan() {
                report.dropped_malformed += 1;
                false
            } else {
                true
            }
        })
        .collect();
    report.kept = kept.len() as u64;
    Ok((kept, report))
}

/// How window boundaries are placed on the time axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowAlignment {
    /// Windows start at each device's first sample.
    #[default]
    StreamStart,
    /// Windows start at multiples of the window length since the Unix epoch.
    WallClock,
}

/// Splits samples into per-device windows of `window_seconds`.
///
/// Every sample lands in exactly one window; empty windows are omitted.
/// Output is ordered by device id, then window start, with samples ordered by
/// `(timestamp, seq)` inside each window.
pub fn windowize(
    samples: &[AccelSample],
    window_seconds: f64,
    alignment: WindowAlignment,
    sample_rate_hz: f64,
) -> Vec<SampleWindow> {
    let window_ms = (window_seconds * 1000.0).round() as i64;
    assert!(window_ms > 0, "window length must be positive");

    let mut per_device: BTreeMap<&DeviceId, Vec<&AccelSample>> = BTreeMap::new();
    for s in samples {
        per_device.entry(&s.device_id).or_default().push(s);
    }

    let mut out = Vec::new();
    for (device, mut stream) in per_device {
        stream.sort_by(|a, b| (a.timestamp, a.seq).cmp(&(b.timestamp, b.seq)));
        let origin = match alignment {
            WindowAlignment::StreamStart => stream[0].timestamp.timestamp_millis(),
            WindowAlignment::WallClock => 0,
        };
        let mut buckets: BTreeMap<i64, Vec<AccelSample>> = BTreeMap::new();
        for s in stream {
            let idx = (s.timestamp.timestamp_millis() - origin).div_euclid(window_ms);
            buckets.entry(idx).or_default().push(s.clone());
        }
        for (idx, samples) in buckets {
            let start_ms = origin + idx * window_ms;
            out.push(SampleWindow {
                device_id: device.clone(),
                window_start: DateTime::<Utc>::from_timestamp_millis(start_ms)
                    .expect("window start within chrono range"),
                nominal_duration: window_seconds,
                sample_rate_hz,
                samples,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    fn with_magnitude(m: f64, seq: u64) -> AccelSample {
        AccelSample::new("d".into(), seq, at("2020-01-01T00:00:00Z"), 0.0, 0.0, m).unwrap()
    }

    #[test]
    fn parses_csv_row() {
        let log = "p1,42,2019-06-01T10:00:00.010Z,0.1,0.2,9.8\n";
        let (samples, report) = parse_log(log.as_bytes(), LogFormat::Csv).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].seq, 42);
        // independent norm: sqrt(0.01 + 0.04 + 96.04) = sqrt(96.09)
        let expected = 96.09f64.sqrt();
        assert!((samples[0].magnitude - expected).abs() < 1e-12);
        assert!((samples[0].magnitude - 9.8026).abs() < 1e-4);
        assert_eq!(report.total_in, 1);
        assert!(report.is_balanced());
    }

    #[test]
    fn empty_stream() {
        for fmt in [LogFormat::Csv, LogFormat::Jsonl] {
            let (samples, report) = parse_log(&b""[..], fmt).unwrap();
            assert!(samples.is_empty());
            assert_eq!(report, CleaningReport::default());
        }
    }

    #[test]
    fn non_numeric_axis_is_malformed() {
        let log = "device_id,seq,timestamp,ax,ay,az\n\
                   p1,1,2019-06-01T10:00:00.000Z,0,0,9.8\n\
                   p1,2,2019-06-01T10:00:00.010Z,abc,0,9.8\n\
                   p1,3,2019-06-01T10:00:00.020Z,0,0,9.7\n";
        let (samples, report) = parse_log(log.as_bytes(), LogFormat::Csv).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(report.dropped_malformed, 1);
        assert_eq!(report.total_in, 3);
    }

    #[test]
    fn magnitude_column_is_validated() {
        let log = "p1,1,2019-06-01T10:00:00.000Z,3,4,12,13\n\
                   p1,2,2019-06-01T10:00:00.010Z,3,4,12,13.5\n\
                   p1,3,2019-06-01T10:00:00.020Z,3,4,12,13.000001\n";
        let (samples, report) = parse_log(log.as_bytes(), LogFormat::Csv).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(report.dropped_malformed, 1);
    }

    #[test]
    fn mostly_malformed_is_corrupt() {
        let log = "garbage\nmore,garbage\np1,1,2019-06-01T10:00:00.000Z,0,0,9.8\n";
        assert!(matches!(
            parse_log(log.as_bytes(), LogFormat::Csv),
            Err(IngestError::Corrupt { malformed: 2, total: 3 })
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let s = with_magnitude(9.9, 5);
        let line = serde_json::to_string(&s).unwrap();
        let input = format!("{line}\n\n{{\"nope\":1}}\n{line}\n");
        let (samples, report) = parse_log(input.as_bytes(), LogFormat::Jsonl).unwrap();
        assert_eq!(samples, vec![s.clone(), s]);
        assert_eq!(report.dropped_malformed, 1);
    }

    #[test]
    fn cleaning_examples() {
        let input: Vec<_> = [9.0, 5.9, 18.0, 10.1]
            .iter()
            .enumerate()
            .map(|(i, &m)| with_magnitude(m, i as u64))
            .collect();
        let (kept, report) = clean_outliers(input, 6.0, 17.0).unwrap();
        let mags: Vec<f64> = kept.iter().map(|s| s.magnitude).collect();
        assert_eq!(mags, vec![9.0, 10.1]);
        assert_eq!((report.dropped_low, report.dropped_high), (1, 1));
        assert!(report.is_balanced());

        let bounds = vec![with_magnitude(6.0, 0), with_magnitude(17.0, 1)];
        let (kept, _) = clean_outliers(bounds.clone(), 6.0, 17.0).unwrap();
        assert_eq!(kept, bounds);

        let (again, report) = clean_outliers(kept.clone(), 6.0, 17.0).unwrap();
        assert_eq!(again, kept);
        assert_eq!(report.kept, report.total_in);
    }

    #[test]
    fn cleaning_rejects_inverted_bounds() {
        assert!(matches!(
            clean_outliers(vec![], 17.0, 6.0),
            Err(IngestError::Bounds { .. })
        ));
        assert!(clean_outliers(vec![], 6.0, 6.0).is_err());
    }

    fn two(a: &str, b: &str) -> Vec<AccelSample> {
        vec![
            AccelSample::new("d".into(), 0, at(a), 0.0, 0.0, 9.8).unwrap(),
            AccelSample::new("d".into(), 1, at(b), 0.0, 0.0, 9.8).unwrap(),
        ]
    }

    #[test]
    fn windowize_same_hour() {
        let s = two("2019-06-01T10:00:00Z", "2019-06-01T10:59:59Z");
        for align in [WindowAlignment::StreamStart, WindowAlignment::WallClock] {
            assert_eq!(windowize(&s, 3600.0, align, 100.0).len(), 1);
        }
    }

    #[test]
    fn windowize_hour_boundary() {
        let s = two("2019-06-01T10:59:59Z", "2019-06-01T11:00:00Z");
        let w = windowize(&s, 3600.0, WindowAlignment::WallClock, 100.0);
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].window_start, at("2019-06-01T11:00:00Z"));
        // aligned to the first sample, one second apart stays together
        assert_eq!(windowize(&s, 3600.0, WindowAlignment::StreamStart, 100.0).len(), 1);
    }

    #[test]
    fn windowize_empty() {
        assert!(windowize(&[], 3600.0, WindowAlignment::StreamStart, 100.0).is_empty());
    }

    #[test]
    fn windowize_skips_gaps_and_orders() {
        let mut s = vec![
            AccelSample::new("b".into(), 0, at("2019-06-01T10:00:00Z"), 0.0, 0.0, 9.8).unwrap(),
            AccelSample::new("a".into(), 1, at("2019-06-01T13:30:00Z"), 0.0, 0.0, 9.8).unwrap(),
            AccelSample::new("a".into(), 0, at("2019-06-01T10:15:00Z"), 0.0, 0.0, 9.8).unwrap(),
        ];
        s.rotate_left(1);
        let w = windowize(&s, 3600.0, WindowAlignment::StreamStart, 100.0);
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].device_id.as_str(), "a");
        assert_eq!(w[0].window_start, at("2019-06-01T10:15:00Z"));
        assert_eq!(w[1].window_start, at("2019-06-01T13:15:00Z"));
        assert_eq!(w[2].device_id.as_str(), "b");
    }

    proptest! {
        #[test]
        fn windows_conserve_and_contain(offsets in proptest::collection::vec(0i64..20_000_000, 0..300),
                                        window in 1u32..10_000) {
            let base = at("2020-03-01T00:00:00Z");
            let samples: Vec<_> = offsets.iter().enumerate().map(|(i, &ms)| {
                let dev = if i % 3 == 0 { "x" } else { "y" };
                AccelSample::new(dev.into(), i as u64, base + chrono::Duration::milliseconds(ms), 0.0, 0.0, 9.8).unwrap()
            }).collect();
            for align in [WindowAlignment::StreamStart, WindowAlignment::WallClock] {
                let ws = windowize(&samples, window as f64, align, 100.0);
                let total: usize = ws.iter().map(|w| w.len()).sum();
                prop_assert_eq!(total, samples.len());
                for w in &ws {
                    prop_assert!(!w.is_empty());
                    for s in &w.samples {
                        prop_assert!(s.timestamp >= w.window_start && s.timestamp < w.window_end());
                        prop_assert_eq!(&s.device_id, &w.device_id);
                    }
                    prop_assert!(w.samples.windows(2).all(|p| (p[0].timestamp, p[0].seq) <= (p[1].timestamp, p[1].seq)));
                }
            }
        }
    }
}
