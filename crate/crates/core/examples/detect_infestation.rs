//! Baseline three healthy hours of one palm, then assess every hour of a
//! six-hour run in which infestation starts at hour three.

use palmwatch::detector::{assess_window, build_baseline, DetectorConfig};
use palmwatch::fieldsim::{MemoryCloud, SimConfig, Simulation};
use palmwatch::ingest::{clean_outliers, windowize, WindowAlignment};
use palmwatch::model::{DeviceId, Placement};

const CONFIG: &str = r#"
seed = 11
[edge]
detection = false
[[farms]]
farm_id = "demo"
[[farms.clusters]]
cluster_id = "c1"
gateway_id = "gw-1"
[[farms.clusters.devices]]
device_id = "palm-17"
placement = "inside"
infested_from_seconds = 10800
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cloud = MemoryCloud::retaining();
    Simulation::run(SimConfig::from_toml(CONFIG)?, 6 * 3600, &mut cloud)?;
    let id = DeviceId::new("palm-17");
    let (clean, _) = clean_outliers(cloud.samples.remove(&id).unwrap_or_default(), 6.0, 17.0)?;
    let windows = windowize(&clean, 3600.0, WindowAlignment::StreamStart, 100.0);

    let cfg = DetectorConfig::default();
    let baseline = build_baseline(&id, Placement::Inside, &windows[..3], &cfg)?;
    println!("baseline whisker span {:.4} from {} windows", baseline.stat.whisker_span, baseline.source_window_count);

    for (hour, w) in windows.iter().enumerate() {
        let a = assess_window(w, Placement::Inside, &baseline, &cfg)?;
        let ind = &a.indicators;
        let flag = |f: bool| if f { 'x' } else { '.' };
        println!(
            "hour {hour}: n={:>6} [{}{}{}{}] PAD {:+.2e} -> {:?}",
            w.len(),
            flag(ind.fft_level.fired),
            flag(ind.psd_pad.fired),
            flag(ind.whisker_ratio.fired),
            flag(ind.mean_shift.fired),
            ind.psd_pad.value.unwrap_or(f64::NAN),
            a.likelihood
        );
    }
    Ok(())
}
