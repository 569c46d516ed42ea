//! Palm infestation monitoring from accelerometer telemetry.
//!
//! The crate covers the analysis path end to end:
//!
//! - [`model`]: shared domain types (samples, windows, devices, digests).
//! - [`ingest`]: log parsing, outlier cleaning and hourly windowing.
//! - [`spectral`]: Hann-windowed FFT, Welch PSD, peak extraction and PAD.
//! - [`stats`]: central tendency, whiskers, histograms and ECDFs.
//! - [`detector`]: baseline profiles and the four-indicator assessment.
//! - [`fieldsim`]: seeded simulation of sensors, gateways and edge nodes.
//!
//! See `examples/` for one runnable program per capability.

pub mod detector;
pub mod fieldsim;
pub mod ingest;
pub mod model;
pub mod spectral;
pub mod stats;

pub use detector::{assess_window, build_baseline, classify, BaselineProfile, DetectorConfig, HealthAssessment};
pub use model::{AccelSample, DeviceId, Digest, Likelihood, Placement, SampleWindow};
