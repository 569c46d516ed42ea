//! Descriptive statistics of magnitude windows: central tendency, box-plot
//! whiskers, histograms and empirical CDFs.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SampleWindow;

pub const DEFAULT_BIN_COUNT: usize = 50;
/// Whisker reach in IQRs beyond the quartiles.
pub const WHISKER_IQR_FACTOR: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("insufficient data: {got} values, need at least {needed}")]
    InsufficientData { needed: usize, got: usize },
    #[error("quartiles out of order: q25 {q25} > q75 {q75}")]
    QuartileOrder { q25: f64, q75: f64 },
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("non-finite value in input")]
    NonFinite,
}

/// Central tendency and spread of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub n: u64,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub q25: f64,
    pub q75: f64,
    pub iqr: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub whisker_span: f64,
    pub duration_minutes: f64,
    /// Values beyond the whiskers; unknown for summaries built from tabulated measures.
    pub outlier_count: Option<u64>,
}

/// Tabulated measures for one data set, as laid out in a central-tendency table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub n: u64,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub q25: f64,
    pub q75: f64,
    pub max: f64,
    pub duration_minutes: f64,
}

impl StatSummary {
    /// Rebuilds a summary (with derived whiskers) from tabulated measures.
    pub fn from_table_row(row: TableRow) -> Result<Self, StatsError> {
        let span = whisker_span_from_quartiles(row.q25, row.q75)?;
        let iqr = row.q75 - row.q25;
        Ok(Self {
            n: row.n,
            mean: row.mean,
            std: row.std,
            median: row.median,
            min: row.min,
            max: row.max,
            q25: row.q25,
            q75: row.q75,
            iqr,
            whisker_low: row.q25 - WHISKER_IQR_FACTOR * iqr,
            whisker_high: row.q75 + WHISKER_IQR_FACTOR * iqr,
            whisker_span: span,
            duration_minutes: row.duration_minutes,
            outlier_count: None,
        })
    }

    pub const CSV_HEADER: [&'static str; 15] = [
        "dataset",
        "sample_size",
        "mean",
        "std",
        "median",
        "min",
        "q25",
        "q50",
        "q75",
        "max",
        "duration_minutes",
        "iqr",
        "whisker_low",
        "whisker_high",
        "whisker_span",
    ];

    /// One CSV record in table column order, followed by the whisker columns.
    pub fn csv_record(&self, dataset: &str) -> Vec<String> {
        let mut rec = vec![dataset.to_string(), self.n.to_string()];
        rec.extend(
            [
                self.mean,
                self.std,
                self.median,
                self.min,
                self.q25,
                self.median,
                self.q75,
                self.max,
                self.duration_minutes,
                self.iqr,
                self.whisker_low,
                self.whisker_high,
                self.whisker_span,
            ]
            .iter()
            .map(|v| v.to_string()),
        );
        rec
    }
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn summarize(window: &SampleWindow) -> Result<StatSummary, StatsError> {
    summarize_values(&window.magnitudes(), window.nominal_duration / 60.0)
}

/// Summary of raw values; standard deviation uses the `n - 1` denominator.
pub fn summarize_values(values: &[f64], duration_minutes: f64) -> Result<StatSummary, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mean, var) = if sorted[0] == sorted[sorted.len() - 1] {
        (sorted[0], 0.0)
    } else {
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    };
    let q25 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q75 = quantile_sorted(&sorted, 0.75);
    let iqr = q75 - q25;
    let whisker_low = q25 - WHISKER_IQR_FACTOR * iqr;
    let whisker_high = q75 + WHISKER_IQR_FACTOR * iqr;
    let outliers = sorted
        .iter()
        .filter(|&&v| v < whisker_low || v > whisker_high)
        .count() as u64;

    Ok(StatSummary {
        n: values.len() as u64,
        mean,
        std: var.sqrt(),
        median,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        q25,
        q75,
        iqr,
        whisker_low,
        whisker_high,
        whisker_span: whisker_high - whisker_low,
        duration_minutes,
        outlier_count: Some(outliers),
    })
}

/// Distance between the box-plot whiskers: `(q75 + 1.5 IQR) - (q25 - 1.5 IQR)`.
pub fn whisker_span_from_quartiles(q25: f64, q75: f64) -> Result<f64, StatsError> {
    if q75 < q25 {
        return Err(StatsError::QuartileOrder { q25, q75 });
    }
    let iqr = q75 - q25;
    Ok((q75 + WHISKER_IQR_FACTOR * iqr) - (q25 - WHISKER_IQR_FACTOR * iqr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramResult {
    pub bin_count: usize,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl HistogramResult {
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin_low", "bin_high", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            out.write_record([
                self.bin_edges[i].to_string(),
                self.bin_edges[i + 1].to_string(),
                c.to_string(),
            ])?;
        }
        out.flush()
    }
}

pub fn histogram(window: &SampleWindow, bin_count: usize) -> Result<HistogramResult, StatsError> {
    histogram_values(&window.magnitudes(), bin_count)
}

/// Uniform-width histogram over `[min, max]`; the maximum falls in the last
/// bin. A zero-width range is widened to `[v - 0.5, v + 0.5]`.
pub fn histogram_values(values: &[f64], bin_count: usize) -> Result<HistogramResult, StatsError> {
    if bin_count == 0 {
        return Err(StatsError::ZeroBins);
    }
    if values.is_empty() {
        return Err(StatsError::InsufficientData { needed: 1, got: 0 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bin_count as f64;
    let mut bin_edges: Vec<f64> = (0..bin_count).map(|i| lo + i as f64 * width).collect();
    bin_edges.push(hi);

    let mut counts = vec![0u64; bin_count];
    for &v in values {
        let idx = (((v - lo) / width).floor() as usize).min(bin_count - 1);
        counts[idx] += 1;
    }
    Ok(HistogramResult {
        bin_count,
        bin_edges,
        counts,
    })
}

/// Empirical CDF evaluated at each distinct value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfResult {
    pub n: u64,
    pub values: Vec<f64>,
    pub fractions: Vec<f64>,
}

impl EcdfResult {
    /// `F(x) = #(samples <= x) / n`.
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.values.partition_point(|v| *v <= x);
        if idx == 0 {
            0.0
        } else {
            self.fractions[idx - 1]
        }
    }

    fn masses(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mut prev = 0.0;
        self.values.iter().zip(&self.fractions).map(move |(&v, &f)| {
            let p = f - prev;
            prev = f;
            (v, p)
        })
    }

    pub fn mean(&self) -> f64 {
        self.masses().map(|(v, p)| v * p).sum()
    }

    /// Sample (`n - 1`) standard deviation recovered from the step masses.
    pub fn std(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let pop: f64 = self.masses().map(|(v, p)| p * (v - m) * (v - m)).sum();
        (pop * self.n as f64 / (self.n - 1) as f64).sqrt()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["value", "fraction"])?;
        for (v, f) in self.values.iter().zip(&self.fractions) {
            out.write_record([v.to_string(), f.to_string()])?;
        }
        out.flush()
    }
}

pub fn ecdf(window: &SampleWindow) -> Result<EcdfResult, StatsError> {
    ecdf_values(&window.magnitudes())
}

pub fn ecdf_values(values: &[f64]) -> Result<EcdfResult, StatsError> {
    if values.is_empty() {
        return Err(StatsError::InsufficientData { needed: 1, got: 0 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out_values = Vec::new();
    let mut fractions = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        if i + 1 < n && sorted[i + 1] == v {
            continue;
        }
        out_values.push(v);
        fractions.push((i + 1) as f64 / n as f64);
    }
    Ok(EcdfResult {
        n: n as u64,
        values: out_values,
        fractions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionComparison {
    /// Largest vertical gap between the two CDFs.
    pub ks_statistic: f64,
    pub mean_shift: f64,
    /// `std_after / std_before`; absent when the before spread is zero.
    pub spread_ratio: Option<f64>,
}

/// Compares two empirical distributions by their CDF gap, mean and spread.
pub fn compare_distributions(
    before: &EcdfResult,
    after: &EcdfResult,
) -> Result<DistributionComparison, StatsError> {
    for e in [before, after] {
        if e.values.is_empty() {
            return Err(StatsError::InsufficientData { needed: 1, got: 0 });
        }
    }
    // Merge-walk both step functions; the supremum is reached at a jump.
    let (mut i, mut j) = (0, 0);
    let (mut fb, mut fa) = (0.0f64, 0.0f64);
    let mut ks = 0.0f64;
    while i < before.values.len() || j < after.values.len() {
        let vb = before.values.get(i).copied().unwrap_or(f64::INFINITY);
        let va = after.values.get(j).copied().unwrap_or(f64::INFINITY);
        let x = vb.min(va);
        if vb == x {
            fb = before.fractions[i];
            i += 1;
        }
        if va == x {
            fa = after.fractions[j];
            j += 1;
        }
        ks = ks.max((fb - fa).abs());
    }
    let sb = before.std();
    Ok(DistributionComparison {
        ks_statistic: ks.min(1.0),
        mean_shift: after.mean() - before.mean(),
        spread_ratio: (sb > 0.0).then(|| after.std() / sb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_one_to_five() {
        let s = summarize_values(&[1.0, 2.0, 3.0, 4.0, 5.0], 60.0).unwrap();
        assert_eq!((s.mean, s.median, s.min, s.max), (3.0, 3.0, 1.0, 5.0));
        assert_eq!((s.q25, s.q75, s.iqr, s.whisker_span), (2.0, 4.0, 2.0, 8.0));
        assert!((s.std - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.outlier_count, Some(0));
    }

    #[test]
    fn summary_of_constant() {
        let s = summarize_values(&[7.0; 4], 60.0).unwrap();
        assert_eq!((s.std, s.iqr, s.whisker_span), (0.0, 0.0, 0.0));
    }

    #[test]
    fn summary_needs_two() {
        assert_eq!(
            summarize_values(&[1.0], 1.0),
            Err(StatsError::InsufficientData { needed: 2, got: 1 })
        );
    }

    #[test]
    fn whisker_span_examples() {
        assert!((whisker_span_from_quartiles(9.58, 9.89).unwrap() - 1.24).abs() < 1e-9);
        assert!((whisker_span_from_quartiles(9.71, 10.15).unwrap() - 1.76).abs() < 1e-9);
        assert_eq!(whisker_span_from_quartiles(3.0, 3.0).unwrap(), 0.0);
        assert!(matches!(
            whisker_span_from_quartiles(2.0, 1.0),
            Err(StatsError::QuartileOrder { .. })
        ));
    }

    #[test]
    fn histogram_examples() {
        let h = histogram_values(&[0.0, 0.5, 1.0], 2).unwrap();
        assert_eq!(h.bin_edges, vec![0.0, 0.5, 1.0]);
        assert_eq!(h.counts, vec![1, 2]);

        let h = histogram_values(&[4.0; 9], 5).unwrap();
        assert_eq!(h.bin_edges.first(), Some(&3.5));
        assert_eq!(h.bin_edges.last(), Some(&4.5));
        assert_eq!(h.counts, vec![0, 0, 9, 0, 0]);

        assert_eq!(histogram_values(&[1.0], 0), Err(StatsError::ZeroBins));
    }

    #[test]
    fn ecdf_examples() {
        let e = ecdf_values(&[1.0, 2.0, 2.0, 4.0]).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 4.0]);
        assert_eq!(e.fractions, vec![0.25, 0.75, 1.0]);
        assert_eq!(e.eval(0.5), 0.0);
        assert_eq!(e.eval(3.0), 0.75);

        let e = ecdf_values(&[3.3]).unwrap();
        assert_eq!((e.values, e.fractions), (vec![3.3], vec![1.0]));
    }

    #[test]
    fn compare_examples() {
        let a = ecdf_values(&[1.0, 2.0, 3.0]).unwrap();
        let c = compare_distributions(&a, &a).unwrap();
        assert_eq!(c.ks_statistic, 0.0);
        assert_eq!(c.mean_shift, 0.0);
        assert!((c.spread_ratio.unwrap() - 1.0).abs() < 1e-12);

        let lo = ecdf_values(&[0.0, 0.5, 1.0]).unwrap();
        let hi = ecdf_values(&[10.0, 10.5, 11.0]).unwrap();
        let c = compare_distributions(&lo, &hi).unwrap();
        assert_eq!(c.ks_statistic, 1.0);
        assert!((c.mean_shift - 10.0).abs() < 1e-12);
    }

    #[test]
    fn ecdf_moments_match_summary() {
        let v = [9.1, 9.7, 9.7, 10.2, 9.9, 10.4, 9.5];
        let e = ecdf_values(&v).unwrap();
        let s = summarize_values(&v, 1.0).unwrap();
        assert!((e.mean() - s.mean).abs() < 1e-12);
        assert!((e.std() - s.std).abs() < 1e-12);
    }

    #[test]
    fn csv_row_layout() {
        let s = summarize_values(&[1.0, 2.0, 3.0, 4.0, 5.0], 60.0).unwrap();
        let rec = s.csv_record("inside-before");
        assert_eq!(rec.len(), StatSummary::CSV_HEADER.len());
        assert_eq!(rec[1], "5");
        assert_eq!(rec[7], rec[4]);
    }
}
