//! Parse a small CSV log, drop implausible magnitudes and cut hourly windows.
//!
//! ```text
//! cargo run -p palmwatch --example magnitude_and_cleaning
//! ```

use palmwatch::ingest::{clean_outliers, parse_log, windowize, CleaningReport, LogFormat, WindowAlignment};
use palmwatch::model::magnitude_of;

const LOG: &str = "\
device_id,seq,timestamp,ax,ay,az
palm-1,0,2019-06-01T08:00:00.000Z,0.12,-0.05,9.71
palm-1,1,2019-06-01T08:00:00.010Z,0.10,-0.04,9.78
palm-1,2,2019-06-01T08:00:00.020Z,0.0,0.0,2.10
palm-1,3,2019-06-01T08:00:00.030Z,not-a-number,0.0,9.8
palm-1,4,2019-06-01T08:00:00.040Z,4.0,12.0,11.0
palm-1,5,2019-06-01T09:00:00.000Z,0.08,-0.02,9.90
palm-2,0,2019-06-01T08:00:00.000Z,0.01,0.02,10.04
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("|(3, 4, 12)| = {}", magnitude_of(3.0, 4.0, 12.0)?);

    let (samples, parsed) = parse_log(LOG.as_bytes(), LogFormat::Csv)?;
    let (clean, cleaned) = clean_outliers(samples, 6.0, 17.0)?;
    let report = CleaningReport::merge_parse(parsed, cleaned);
    println!(
        "rows {} kept {} low {} high {} malformed {}",
        report.total_in, report.kept, report.dropped_low, report.dropped_high, report.dropped_malformed
    );
    assert!(report.is_balanced());

    for w in windowize(&clean, 3600.0, WindowAlignment::StreamStart, 100.0) {
        let mags: Vec<String> = w.magnitudes().iter().map(|m| format!("{m:.3}")).collect();
        println!("{} @ {}: [{}]", w.device_id, w.window_start, mags.join(", "));
    }
    Ok(())
}
