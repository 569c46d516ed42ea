//! Box-plot statistics for hourly inside-trunk measurements given as summary rows,
//! plus the same comparison on synthetic draws with histogram and ECDF.

use chrono::Utc;
use palmwatch::detector::{assess_summaries, DetectorConfig};
use palmwatch::stats::{compare_distributions, ecdf_values, histogram_values, summarize_values, StatSummary, TableRow};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let before = StatSummary::from_table_row(TableRow {
        n: 24_077,
        mean: 9.74,
        std: 0.25,
        median: 9.73,
        min: 8.29,
        q25: 9.58,
        q75: 9.89,
        max: 11.67,
        duration_minutes: 60.0,
    })?;
    let after = StatSummary::from_table_row(TableRow {
        n: 17_614,
        mean: 9.94,
        std: 0.37,
        median: 9.93,
        min: 8.20,
        q25: 9.71,
        q75: 10.15,
        max: 12.64,
        duration_minutes: 60.0,
    })?;
    println!("whisker span before {:.4}, after {:.4}", before.whisker_span, after.whisker_span);

    let a = assess_summaries("inside".into(), Utc::now(), &after, &before, &DetectorConfig::default());
    println!(
        "whisker ratio {:.3} fired={}, mean shift {:.3} fired={} -> {:?}",
        a.indicators.whisker_ratio.value.unwrap_or(f64::NAN),
        a.indicators.whisker_ratio.fired,
        a.indicators.mean_shift.value.unwrap_or(f64::NAN),
        a.indicators.mean_shift.fired,
        a.likelihood
    );

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut draw = |mean: f64, std: f64| -> Vec<f64> {
        let normal = Normal::new(mean, std).unwrap();
        (0..20_000).map(|_| normal.sample(&mut rng)).collect()
    };
    let (healthy, infested) = (draw(9.74, 0.25), draw(9.94, 0.37));
    let s = summarize_values(&healthy, 60.0)?;
    println!("synthetic healthy: mean {:.3} std {:.3} iqr {:.3}", s.mean, s.std, s.iqr);

    let hist = histogram_values(&infested, 50)?;
    let mode = hist.counts.iter().enumerate().max_by_key(|(_, c)| **c).map(|(i, _)| i).unwrap();
    println!("infested histogram mode bin [{:.3}, {:.3})", hist.bin_edges[mode], hist.bin_edges[mode + 1]);

    let cmp = compare_distributions(&ecdf_values(&healthy)?, &ecdf_values(&infested)?)?;
    println!(
        "KS {:.3}, mean shift {:+.3}, spread ratio {:.3}",
        cmp.ks_statistic,
        cmp.mean_shift,
        cmp.spread_ratio.unwrap_or(f64::NAN)
    );
    Ok(())
}
