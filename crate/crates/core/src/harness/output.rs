//! Aggregation and files: `trials.csv`, `timings.csv`, `summary.json`,
//! `fig_<axis>.csv`, `fig_trials_long.csv` and `columns.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::sweep::{Method, SweepSpec, TrialRecord};

pub const SCHEMA_VERSION: u32 = 1;

/// Metrics aggregated per (point, method), in output order.
pub const METRIC_NAMES: [&str; 10] = [
    "rmse_pooled",
    "crlb_root",
    "rmse_assigned",
    "detection_rate",
    "n_misdetections",
    "n_false_alarms",
    "order_correct",
    "n_objects_est",
    "n_interference_est",
    "coherence_ratio",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    pub n_valid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub x_value_db: f64,
    pub method: Method,
    pub n_trials: usize,
    pub n_failed: usize,
    pub metrics: BTreeMap<String, MetricStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub scenario_name: String,
    pub axis: String,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub trials_per_point: usize,
    pub base_seed: u64,
    pub cutoff: f64,
    pub points: Vec<PointSummary>,
}

impl SweepSummary {
    pub fn point(&self, x: f64, method: Method) -> Option<&PointSummary> {
        self.points.iter().find(|p| p.x_value_db == x && p.method == method)
    }
}

impl PointSummary {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).and_then(|m| m.mean)
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean and quartiles of `values`; with `pooled`, the mean is the root mean
/// square instead.
fn stats(mut values: Vec<f64>, pooled: bool) -> MetricStats {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return MetricStats {
            mean: None,
            median: None,
            q25: None,
            q75: None,
            n_valid: 0,
        };
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len() as f64;
    let mean = if pooled {
        (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
    } else {
        values.iter().sum::<f64>() / n
    };
    MetricStats {
        mean: Some(mean),
        median: Some(quantile(&values, 0.5)),
        q25: Some(quantile(&values, 0.25)),
        q75: Some(quantile(&values, 0.75)),
        n_valid: values.len(),
    }
}

/// Per-trial value of `metric`, `None` when it does not apply to the trial.
pub fn metric_value(rec: &TrialRecord, metric: &str) -> Option<f64> {
    let m = rec.metrics.as_ref()?;
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    match metric {
        // only trials with the right object count and at least one assignment
        "rmse_pooled" => (m.order_correct && m.n_misdetections == 0 && m.n_objects_est > 0).then_some(m.rmse_assigned),
        "crlb_root" => m.crlb_root,
        "rmse_assigned" => (m.n_objects_est > m.n_false_alarms).then_some(m.rmse_assigned),
        "detection_rate" => Some(m.detection_rate),
        "n_misdetections" => Some(m.n_misdetections as f64),
        "n_false_alarms" => Some(m.n_false_alarms as f64),
        "order_correct" => Some(b(m.order_correct)),
        "n_objects_est" => Some(m.n_objects_est as f64),
        "n_interference_est" => Some(m.n_interference_est as f64),
        "coherence_ratio" => m.coherence_value,
        _ => None,
    }
}

pub fn summarize(spec: &SweepSpec, records: &[TrialRecord]) -> SweepSummary {
    let mut points = Vec::new();
    for (pi, &x) in spec.values.iter().enumerate() {
        for &method in &spec.methods {
            let recs: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.point_index == pi && r.method == method)
                .collect();
            let valid: Vec<&&TrialRecord> = recs.iter().filter(|r| r.is_valid()).collect();
            let metrics = METRIC_NAMES
                .iter()
                .map(|&name| {
                    let vals = valid.iter().filter_map(|r| metric_value(r, name)).collect();
                    let pooled = name == "rmse_pooled" || name == "crlb_root";
                    (name.to_string(), stats(vals, pooled))
                })
                .collect();
            points.push(PointSummary {
                x_value_db: x,
                method,
                n_trials: recs.len(),
                n_failed: recs.len() - valid.len(),
                metrics,
            });
        }
    }
    SweepSummary {
        schema_version: SCHEMA_VERSION,
        scenario_name: spec.scenario.name.clone(),
        axis: spec.axis.to_string(),
        values: spec.values.clone(),
        methods: spec.methods.clone(),
        trials_per_point: spec.trials_per_point,
        base_seed: spec.base_seed,
        cutoff: spec.cutoff(),
        points,
    }
}

#[derive(Serialize)]
struct TrialRow<'a> {
    point_index: usize,
    x_value_db: f64,
    trial_id: usize,
    seed: u64,
    scenario_name: &'a str,
    method: &'a str,
    snr_db: f64,
    sir_db: Option<f64>,
    status: &'a str,
    error: &'a str,
    rmse_assigned: Option<f64>,
    mean_assigned_error: Option<f64>,
    n_misdetections: Option<usize>,
    n_false_alarms: Option<usize>,
    detection_rate: Option<f64>,
    order_correct: Option<bool>,
    n_objects_est: Option<usize>,
    n_interference_est: Option<usize>,
    k_hat_per_ramp: String,
    crlb_root: Option<f64>,
    coherence_ratio: Option<f64>,
    iterations: usize,
    converged: bool,
}

#[derive(Serialize)]
struct TimingRow<'a> {
    point_index: usize,
    trial_id: usize,
    method: &'a str,
    wall_time_ms: f64,
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Per-trial CSV without timing columns, so identical seeds give identical files.
pub fn write_trials_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    for r in records {
        let m = r.metrics.as_ref();
        let k_hat: Vec<String> = r.k_hat_per_ramp.iter().map(|k| k.to_string()).collect();
        w.serialize(TrialRow {
            point_index: r.point_index,
            x_value_db: r.x_value_db,
            trial_id: r.trial_id,
            seed: r.seed,
            scenario_name: &r.scenario_name,
            method: r.method.name(),
            snr_db: r.snr_db,
            sir_db: r.sir_db,
            status: if r.is_valid() { "ok" } else { "failed" },
            error: r.failure.as_deref().unwrap_or(""),
            rmse_assigned: m.map(|m| m.rmse_assigned),
            mean_assigned_error: m.map(|m| m.mean_assigned_error),
            n_misdetections: m.map(|m| m.n_misdetections),
            n_false_alarms: m.map(|m| m.n_false_alarms),
            detection_rate: m.map(|m| m.detection_rate),
            order_correct: m.map(|m| m.order_correct),
            n_objects_est: m.map(|m| m.n_objects_est),
            n_interference_est: m.map(|m| m.n_interference_est),
            k_hat_per_ramp: k_hat.join(";"),
            crlb_root: m.and_then(|m| m.crlb_root),
            coherence_ratio: m.and_then(|m| m.coherence_value),
            iterations: r.iterations,
            converged: r.converged,
        })
        .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    for r in records {
        w.serialize(TimingRow {
            point_index: r.point_index,
            trial_id: r.trial_id,
            method: r.method.name(),
            wall_time_ms: r.wall_time_ms,
        })
        .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

const FIG_HEADER: [&str; 7] = ["x_value_db", "method", "metric", "mean", "q25", "q75", "n_valid"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const COLUMNS_DOC: &str = "\
fig_<axis>.csv: one row per sweep point, method and metric.
  x_value_db   value of the swept quantity (SNR or SIR) in dB
  method       vsep, object-only, joint, zeroing, mca or no-interference
  metric       see below
  mean         mean over valid trials; for rmse_pooled and crlb_root the root mean square
  q25, q75     quartiles over valid trials (linear interpolation)
  n_valid      trials that contributed a value

metrics:
  rmse_pooled         distance between true and assigned estimated (beat, Doppler), in
                      normalized frequency, over trials with the correct object count and
                      no misdetection
  crlb_root           square root of the beat-frequency CRLB, averaged over true objects
  rmse_assigned       per-trial RMS distance of assigned pairs
  detection_rate      assigned true objects / true objects
  n_misdetections     unassigned true objects
  n_false_alarms      unassigned estimates
  order_correct       1 when the estimated object count equals the true one
  n_objects_est       estimated object count
  n_interference_est  estimated interference components over all ramps
  coherence_ratio     |Phi^H U Psi beta| / |Phi^H Phi alpha| of the true components

fig_trials_long.csv: one row per trial, method and metric with its value (for box plots).
trials.csv: one row per trial and method; empty cells are undefined values.
timings.csv: wall-clock time per trial and method (not deterministic).
summary.json: the aggregates of fig_<axis>.csv plus medians, with schema_version.
";

/// Writes the aggregate CSV, the per-trial long CSV and the column notes.
pub fn emit_plot_data(summary: &SweepSummary, records: &[TrialRecord], out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join(format!("fig_{}.csv", summary.axis))).map_err(io_err)?;
    w.write_record(FIG_HEADER).map_err(io_err)?;
    for p in &summary.points {
        for name in METRIC_NAMES {
            let s = &p.metrics[name];
            w.write_record([
                p.x_value_db.to_string(),
                p.method.name().to_string(),
                name.to_string(),
                opt(s.mean),
                opt(s.q25),
                opt(s.q75),
                s.n_valid.to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out_dir.join("fig_trials_long.csv")).map_err(io_err)?;
    w.write_record(["x_value_db", "method", "trial_id", "metric", "value"]).map_err(io_err)?;
    for r in records.iter().filter(|r| r.is_valid()) {
        for name in METRIC_NAMES {
            if let Some(v) = metric_value(r, name) {
                w.write_record([
                    r.x_value_db.to_string(),
                    r.method.name().to_string(),
                    r.trial_id.to_string(),
                    name.to_string(),
                    v.to_string(),
                ])
                .map_err(io_err)?;
            }
        }
    }
    w.flush()?;
    fs::write(out_dir.join("columns.txt"), COLUMNS_DOC)?;
    Ok(())
}

pub fn write_summary_json(summary: &SweepSummary, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles() {
        let s = stats(vec![4.0, 1.0, 3.0, 2.0, f64::NAN], false);
        assert_eq!((s.mean, s.median, s.q25, s.q75, s.n_valid), (Some(2.5), Some(2.5), Some(1.75), Some(3.25), 4));
        let s = stats(vec![3.0, 4.0], true);
        assert!((s.mean.unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(stats(vec![], false).n_valid, 0);
    }
}
