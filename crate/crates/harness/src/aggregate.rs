//! Mean and standard-error curves over replicates.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::run::{fmt_f64, ReplicateRun};
use crate::HarnessError;

/// One row of the aggregated CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub experiment_id: String,
    pub algorithm: String,
    /// MER epoch, 0 for single-scale solvers.
    pub epoch: usize,
    /// Step within the run or epoch: the number of samples behind the reported output.
    pub step: usize,
    /// Oracle calls so far, cumulative across MER epochs.
    pub samples_consumed: u64,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; NaN for a single replicate.
    pub stderr: f64,
    pub replicates: usize,
    pub metric: String,
}

/// Arithmetic mean and standard error, summing in the given order.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups records by `(algorithm, epoch, step)` over the replicates where
/// the algorithm succeeded, in replicate order. Points missing from some
/// successful replicate are dropped so every point of a curve has the same
/// replicate count.
pub fn aggregate(cfg: &ExperimentConfig, runs: &[ReplicateRun]) -> Vec<CurvePoint> {
    let mut out = Vec::new();
    for (a, alg) in cfg.algorithms.iter().enumerate() {
        let successful: Vec<_> = runs.iter().filter_map(|r| r.algorithms[a].result.as_ref().ok()).collect();
        let n = successful.len();
        let mut groups: BTreeMap<(usize, usize), (u64, String, Vec<f64>)> = BTreeMap::new();
        for traces in &successful {
            for trace in traces.iter() {
                for rec in &trace.records {
                    let Some(err) = rec.error else { continue };
                    let entry = groups
                        .entry((trace.epoch, rec.step))
                        .or_insert_with(|| (rec.samples_consumed, trace.metric.clone().unwrap_or_default(), Vec::new()));
                    entry.2.push(err);
                }
            }
        }
        for ((epoch, step), (samples_consumed, metric, values)) in groups {
            if values.len() != n {
                continue;
            }
            let (mean, stderr) = mean_stderr(&values);
            out.push(CurvePoint {
                experiment_id: cfg.experiment_id.clone(),
                algorithm: alg.tag.clone(),
                epoch,
                step,
                samples_consumed,
                mean,
                stderr,
                replicates: n,
                metric,
            });
        }
    }
    out
}

pub fn write_curves(path: &Path, points: &[CurvePoint]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["experiment_id", "algorithm", "epoch", "step", "samples_consumed", "mean", "stderr", "replicates", "metric"])?;
    for p in points {
        w.write_record([
            p.experiment_id.clone(),
            p.algorithm.clone(),
            p.epoch.to_string(),
            p.step.to_string(),
            p.samples_consumed.to_string(),
            fmt_f64(p.mean),
            fmt_f64(p.stderr),
            p.replicates.to_string(),
            p.metric.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curves(path: &Path) -> Result<Vec<CurvePoint>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
