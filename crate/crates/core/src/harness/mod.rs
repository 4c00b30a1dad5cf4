//! Scenario loading, Monte Carlo sweeps and result files.

mod config;
mod output;
mod sweep;

use std::path::Path;

use crate::error::Result;

pub use config::{
    load_mca_config, load_scenario, load_vsep_config, parse_mca_config, parse_scenario, parse_vsep_config,
};
pub use output::{
    emit_plot_data, metric_value, summarize, write_summary_json, write_timings_csv, write_trials_csv, MetricStats,
    PointSummary, SweepSummary, METRIC_NAMES, SCHEMA_VERSION,
};
pub use sweep::{run_sweep_records, splitmix64, trial_seed, Axis, Method, SweepSpec, TrialRecord};

/// Runs a sweep and writes every output file into `out_dir`.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path) -> Result<(SweepSummary, Vec<TrialRecord>)> {
    std::fs::create_dir_all(out_dir)?;
    let records = run_sweep_records(spec)?;
    let summary = summarize(spec, &records);
    write_trials_csv(&records, &out_dir.join("trials.csv"))?;
    write_timings_csv(&records, &out_dir.join("timings.csv"))?;
    write_summary_json(&summary, &out_dir.join("summary.json"))?;
    emit_plot_data(&summary, &records, out_dir)?;
    Ok((summary, records))
}

/// Parses "a,b,c" or "start:stop:step" (inclusive) into dB values.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    use crate::error::Error;
    let bad = |s: &str| Error::Input(format!("bad sweep value `{s}`"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(s)))
            .collect::<Result<_>>()?;
        let (start, stop, step) = (v[0], v[1], v[2]);
        if !(step > 0.0) || stop < start {
            return Err(Error::Input(format!("range `{text}` needs start <= stop and step > 0")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + i as f64 * step).collect());
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad(s)))
        .collect()
}
