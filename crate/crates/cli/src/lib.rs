//! Operator commands behind the `palmwatch` binary.
//!
//! - [`simulate`]: run a seeded farm simulation and write its streams,
//!   digests, assessments and a run summary.
//! - [`analyze`]: turn a telemetry log and a healthy baseline log into
//!   plot-ready per-window data files plus one assessment per window.
//! - [`serve`]: run the cloud service until interrupted.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 invalid configuration
//! or arguments, 3 insufficient baseline, 4 port already in use.

pub mod analyze;
mod error;
pub mod serve;
pub mod simulate;

pub use error::CliError;
