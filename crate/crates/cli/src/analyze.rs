//! `palmwatch analyze`: before/after analysis of telemetry logs.
//!
//! Both logs are parsed (CSV or JSONL), cleaned to `[6, 17]` m/s² and cut into
//! windows. Each device's baseline windows form its healthy reference and
//! every input window is assessed against it. Output layout:
//!
//! ```text
//! <output>/assessments.jsonl            one HealthAssessment per input window
//! <output>/assessments.csv              the same, flattened
//! <output>/pad.csv                      peak average difference per input window
//! <output>/summary.csv                  box-plot statistics per window
//! <output>/baselines.json               the healthy profile of each device
//! <output>/<device>/<phase>/<NNN>/      phase is `baseline` or `input`
//!     window.json                       window metadata, stats, spectral flags, comparison
//!     time_series.csv                   timestamp,seq,magnitude
//!     fft.csv                           freq_hz,value (amplitude)
//!     psd.csv                           freq_hz,value (only when a full PSD segment fits)
//!     histogram.csv                     bin_low,bin_high,count
//!     ecdf.csv                          value,fraction
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use clap::{Args, ValueEnum};
use palmwatch::detector::{assess_window, build_baseline, BaselineProfile, DetectorConfig, DetectorError};
use palmwatch::ingest::{clean_outliers, parse_log, windowize, CleaningReport, LogFormat, WindowAlignment};
use palmwatch::model::{DeviceId, Placement, SampleWindow};
use palmwatch::spectral::{band_slice, fft_spectrum_of, welch_psd_of, SpectralError};
use palmwatch::stats::{
    compare_distributions, ecdf_values, histogram_values, summarize_values, DistributionComparison, EcdfResult,
    StatSummary,
};
use palmwatch::HealthAssessment;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    Inside,
    Outside,
}

impl From<PlacementArg> for Placement {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::Inside => Placement::Inside,
            PlacementArg::Outside => Placement::Outside,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignmentArg {
    StreamStart,
    WallClock,
}

impl From<AlignmentArg> for WindowAlignment {
    fn from(a: AlignmentArg) -> Self {
        match a {
            AlignmentArg::StreamStart => WindowAlignment::StreamStart,
            AlignmentArg::WallClock => WindowAlignment::WallClock,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Telemetry log to assess (`.csv` or `.jsonl`).
    #[arg(long)]
    pub input: PathBuf,
    /// Log of the same devices while known to be healthy.
    #[arg(long)]
    pub baseline: PathBuf,
    /// Directory for the analysis files; created if missing.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 3600.0)]
    pub window_seconds: f64,
    /// Detector thresholds (TOML); defaults when omitted.
    #[arg(long)]
    pub detector_config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PlacementArg::Inside)]
    pub placement: PlacementArg,
    #[arg(long, value_enum, default_value_t = AlignmentArg::StreamStart)]
    pub alignment: AlignmentArg,
    /// Log format; guessed from the file extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, default_value_t = 100.0)]
    pub sample_rate_hz: f64,
    #[arg(long, default_value_t = 50)]
    pub histogram_bins: usize,
}

impl AnalyzeArgs {
    /// Arguments with every option at its default.
    pub fn new(input: impl Into<PathBuf>, baseline: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            baseline: baseline.into(),
            output: output.into(),
            window_seconds: 3600.0,
            detector_config: None,
            placement: PlacementArg::Inside,
            alignment: AlignmentArg::StreamStart,
            format: None,
            sample_rate_hz: 100.0,
            histogram_bins: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Baseline,
    Input,
}

impl Phase {
    fn as_str(self) -> &'static str {
        match self {
            Phase::Baseline => "baseline",
            Phase::Input => "input",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FftInfo {
    pub n_fft: usize,
    /// Share of bins above the detector's absolute amplitude threshold.
    pub fraction_above_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdInfo {
    pub evaluable: bool,
    pub segments: usize,
    pub band_hz: [f64; 2],
    pub band_peak_count: usize,
    pub band_peak_average: Option<f64>,
}

/// Everything computed for one window, as written to `window.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    pub device_id: DeviceId,
    pub phase: Phase,
    pub index: usize,
    pub window_start: String,
    pub samples: usize,
    pub stats: StatSummary,
    pub fft: FftInfo,
    pub psd: PsdInfo,
    /// This window against the device's pooled baseline.
    pub comparison: DistributionComparison,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assessment: Option<HealthAssessment>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub input_cleaning: CleaningReport,
    pub baseline_cleaning: CleaningReport,
    pub windows: Vec<WindowReport>,
    /// Windows with fewer than two samples, reported as `device/phase/index`.
    pub skipped: Vec<String>,
}

impl AnalyzeReport {
    pub fn assessments(&self) -> impl Iterator<Item = &HealthAssessment> {
        self.windows.iter().filter_map(|w| w.assessment.as_ref())
    }
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn load(path: &Path, format: Option<FormatArg>) -> Result<(Vec<palmwatch::AccelSample>, CleaningReport), CliError> {
    let format = match format {
        Some(FormatArg::Csv) => LogFormat::Csv,
        Some(FormatArg::Jsonl) => LogFormat::Jsonl,
        None => LogFormat::from_path(path).ok_or_else(|| {
            CliError::Config(format!("{}: cannot tell the log format, pass --format", path.display()))
        })?,
    };
    let file = File::open(path).map_err(CliError::io(path))?;
    let (samples, parsed) = parse_log(std::io::BufReader::new(file), format)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let (clean, cleaned) =
        clean_outliers(samples, 6.0, 17.0).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((clean, CleaningReport::merge_parse(parsed, cleaned)))
}

fn detector_config(path: Option<&Path>) -> Result<DetectorConfig, CliError> {
    let Some(path) = path else {
        return Ok(DetectorConfig::default());
    };
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    DetectorConfig::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn group(windows: Vec<SampleWindow>) -> BTreeMap<DeviceId, Vec<SampleWindow>> {
    let mut out: BTreeMap<DeviceId, Vec<SampleWindow>> = BTreeMap::new();
    for w in windows {
        out.entry(w.device_id.clone()).or_default().push(w);
    }
    out
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(CliError::io(path))
}

struct WindowContext<'a> {
    config: &'a DetectorConfig,
    placement: Placement,
    baseline: &'a BaselineProfile,
    pooled: &'a EcdfResult,
    bins: usize,
}

fn analyze_window(
    ctx: &WindowContext<'_>,
    w: &SampleWindow,
    phase: Phase,
    index: usize,
    dir: &Path,
) -> Result<WindowReport, CliError> {
    let fail = |e: &dyn std::fmt::Display| CliError::Input(format!("{} window {index}: {e}", w.device_id));
    let values = w.magnitudes();
    let stats = summarize_values(&values, w.nominal_duration / 60.0).map_err(|e| fail(&e))?;
    let spectrum = fft_spectrum_of(&values, w.sample_rate_hz, ctx.config.detrend).map_err(|e| fail(&e))?;
    let psd = match welch_psd_of(&values, w.sample_rate_hz, &ctx.config.welch()) {
        Ok(psd) => Some(psd),
        Err(SpectralError::InsufficientData { .. }) => None,
        Err(e) => return Err(fail(&e)),
    };
    let band_peaks = match &psd {
        Some(psd) => Some(
            band_slice(psd, ctx.config.band_low_hz, ctx.config.band_high_hz)
                .map_err(|e| fail(&e))?
                .peaks(ctx.config.peak_threshold),
        ),
        None => None,
    };
    let histogram = histogram_values(&values, ctx.bins).map_err(|e| fail(&e))?;
    let ecdf = ecdf_values(&values).map_err(|e| fail(&e))?;
    let comparison = compare_distributions(ctx.pooled, &ecdf).map_err(|e| fail(&e))?;
    let assessment = match phase {
        Phase::Input => Some(assess_window(w, ctx.placement, ctx.baseline, ctx.config).map_err(|e| fail(&e))?),
        Phase::Baseline => None,
    };

    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let series = dir.join("time_series.csv");
    let mut out = csv_writer(&series)?;
    out.write_record(["timestamp", "seq", "magnitude"]).map_err(csv_err(&series))?;
    for s in &w.samples {
        out.write_record([timestamp(s.timestamp), s.seq.to_string(), s.magnitude.to_string()])
            .map_err(csv_err(&series))?;
    }
    out.flush().map_err(CliError::io(&series))?;

    let with_file = |name: &str, write: &dyn Fn(BufWriter<File>) -> std::io::Result<()>| -> Result<(), CliError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(CliError::io(&path))?;
        write(BufWriter::new(file)).map_err(CliError::io(&path))
    };
    with_file("fft.csv", &|f| spectrum.write_csv(f))?;
    if let Some(psd) = &psd {
        with_file("psd.csv", &|f| psd.write_csv(f))?;
    }
    with_file("histogram.csv", &|f| histogram.write_csv(f))?;
    with_file("ecdf.csv", &|f| ecdf.write_csv(f))?;

    let report = WindowReport {
        device_id: w.device_id.clone(),
        phase,
        index,
        window_start: timestamp(w.window_start),
        samples: w.len(),
        stats,
        fft: FftInfo {
            n_fft: spectrum.n_fft,
            fraction_above_threshold: spectrum.fraction_above(ctx.config.fft_abs_threshold),
        },
        psd: PsdInfo {
            evaluable: psd.is_some(),
            segments: psd.as_ref().map_or(0, |p| p.segments),
            band_hz: [ctx.config.band_low_hz, ctx.config.band_high_hz],
            band_peak_count: band_peaks.as_ref().map_or(0, |p| p.peaks.len()),
            band_peak_average: band_peaks.as_ref().map(|p| p.peak_average),
        },
        comparison,
        assessment,
    };
    write_json(&dir.join("window.json"), &report)?;
    Ok(report)
}

fn dir_name(id: &DeviceId) -> String {
    id.as_str()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_tables(output: &Path, report: &AnalyzeReport, baselines: &BTreeMap<DeviceId, BaselineProfile>) -> Result<(), CliError> {
    let path = output.join("assessments.jsonl");
    let mut text = String::new();
    for a in report.assessments() {
        text.push_str(&serde_json::to_string(a).expect("assessment serializes"));
        text.push('\n');
    }
    fs::write(&path, text).map_err(CliError::io(&path))?;

    let path = output.join("assessments.csv");
    let mut out = csv_writer(&path)?;
    out.write_record([
        "device_id",
        "window_start",
        "fft_level",
        "psd_pad",
        "whisker_ratio",
        "mean_shift",
        "fired_count",
        "likelihood",
    ])
    .map_err(csv_err(&path))?;
    for a in report.assessments() {
        let ind = &a.indicators;
        let flag = |i: &palmwatch::detector::IndicatorOutcome| match (i.evaluable, i.fired) {
            (false, _) => "not_evaluable",
            (true, true) => "fired",
            (true, false) => "quiet",
        };
        out.write_record([
            a.device_id.as_str().to_string(),
            timestamp(a.window_start),
            flag(&ind.fft_level).into(),
            flag(&ind.psd_pad).into(),
            flag(&ind.whisker_ratio).into(),
            flag(&ind.mean_shift).into(),
            a.fired_count.to_string(),
            format!("{:?}", a.likelihood).to_lowercase(),
        ])
        .map_err(csv_err(&path))?;
    }
    out.flush().map_err(CliError::io(&path))?;

    let path = output.join("pad.csv");
    let mut out = csv_writer(&path)?;
    out.write_record([
        "device_id",
        "window",
        "window_start",
        "baseline_peak_average",
        "window_peak_average",
        "pad",
    ])
    .map_err(csv_err(&path))?;
    for w in report.windows.iter().filter(|w| w.phase == Phase::Input) {
        let before = baselines[&w.device_id].psd_peaks.as_ref().map(|p| p.peak_average);
        let pad = w.assessment.as_ref().and_then(|a| a.indicators.psd_pad.value);
        out.write_record([
            w.device_id.as_str().to_string(),
            w.index.to_string(),
            w.window_start.clone(),
            fmt_opt(before),
            fmt_opt(w.psd.band_peak_average),
            fmt_opt(pad),
        ])
        .map_err(csv_err(&path))?;
    }
    out.flush().map_err(CliError::io(&path))?;

    let path = output.join("summary.csv");
    let mut out = csv_writer(&path)?;
    out.write_record(StatSummary::CSV_HEADER).map_err(csv_err(&path))?;
    for w in &report.windows {
        let dataset = format!("{}/{}/{:03}", w.device_id, w.phase.as_str(), w.index);
        out.write_record(w.stats.csv_record(&dataset)).map_err(csv_err(&path))?;
    }
    out.flush().map_err(CliError::io(&path))?;

    write_json(&output.join("baselines.json"), baselines)
}

/// Analyzes `args.input` against `args.baseline` and writes the output tree.
pub fn analyze(args: &AnalyzeArgs) -> Result<AnalyzeReport, CliError> {
    if !(args.window_seconds > 0.0 && args.window_seconds.is_finite()) {
        return Err(CliError::Config(format!("window length {} must be positive", args.window_seconds)));
    }
    if !(args.sample_rate_hz > 0.0 && args.sample_rate_hz.is_finite()) {
        return Err(CliError::Config(format!("sample rate {} must be positive", args.sample_rate_hz)));
    }
    if args.histogram_bins == 0 {
        return Err(CliError::Config("histogram needs at least one bin".into()));
    }
    let config = detector_config(args.detector_config.as_deref())?;
    let placement = Placement::from(args.placement);
    let alignment = WindowAlignment::from(args.alignment);

    let (input, input_cleaning) = load(&args.input, args.format)?;
    let (baseline, baseline_cleaning) = load(&args.baseline, args.format)?;
    if input.is_empty() {
        return Err(CliError::Input(format!("{}: no usable samples", args.input.display())));
    }
    let input = group(windowize(&input, args.window_seconds, alignment, args.sample_rate_hz));
    let mut healthy = group(windowize(&baseline, args.window_seconds, alignment, args.sample_rate_hz));

    let mut baselines = BTreeMap::new();
    for device in input.keys() {
        let windows = healthy.get(device).map(Vec::as_slice).unwrap_or_default();
        let profile = build_baseline(device, placement, windows, &config).map_err(|e| match e {
            DetectorError::InsufficientBaseline => {
                CliError::InsufficientBaseline(format!("no healthy samples for device {device}"))
            }
            DetectorError::Stats(e) => CliError::InsufficientBaseline(format!("device {device}: {e}")),
            other => CliError::Input(format!("device {device}: {other}")),
        })?;
        baselines.insert(device.clone(), profile);
    }

    fs::create_dir_all(&args.output).map_err(CliError::io(&args.output))?;
    let mut report = AnalyzeReport {
        input_cleaning,
        baseline_cleaning,
        ..Default::default()
    };
    for (device, windows) in &input {
        let before = healthy.remove(device).unwrap_or_default();
        let pooled: Vec<f64> = before.iter().flat_map(|w| w.magnitudes()).collect();
        let pooled = ecdf_values(&pooled).map_err(|e| CliError::InsufficientBaseline(format!("device {device}: {e}")))?;
        let ctx = WindowContext {
            config: &config,
            placement,
            baseline: &baselines[device],
            pooled: &pooled,
            bins: args.histogram_bins,
        };
        let device_dir = args.output.join(dir_name(device));
        for (phase, list) in [(Phase::Baseline, &before), (Phase::Input, windows)] {
            for (index, w) in list.iter().enumerate() {
                let label = format!("{device}/{}/{index:03}", phase.as_str());
                if w.len() < 2 {
                    tracing::warn!(window = %label, samples = w.len(), "window too short, skipped");
                    report.skipped.push(label);
                    continue;
                }
                let dir = device_dir.join(phase.as_str()).join(format!("{index:03}"));
                report.windows.push(analyze_window(&ctx, w, phase, index, &dir)?);
            }
        }
    }
    write_tables(&args.output, &report, &baselines)?;
    Ok(report)
}
