//! Ordering reports between two aggregated curves.

use serde::Serialize;

use crate::aggregate::CurvePoint;
use crate::HarnessError;

/// A plotted series: `(sample count, mean, stderr)` with the sample count on
/// the x-axis. For MER only the end of each epoch is plotted, at `T_k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curve {
    pub algorithm: String,
    pub metric: String,
    pub points: Vec<(usize, f64, f64)>,
    pub replicates: usize,
}

/// Extracts one algorithm's series. `algorithm` may be omitted when the
/// CSV holds a single algorithm.
pub fn extract_curve(points: &[CurvePoint], algorithm: Option<&str>) -> Result<Curve, HarnessError> {
    let tag = match algorithm {
        Some(t) => t.to_string(),
        None => {
            let mut tags: Vec<&str> = points.iter().map(|p| p.algorithm.as_str()).collect();
            tags.dedup();
            tags.sort_unstable();
            tags.dedup();
            match tags.as_slice() {
                [one] => one.to_string(),
                [] => return Err(HarnessError::EmptyCurve("no rows".into())),
                many => return Err(HarnessError::AmbiguousAlgorithm(many.join(", "))),
            }
        }
    };
    let rows: Vec<&CurvePoint> = points.iter().filter(|p| p.algorithm == tag).collect();
    let Some(first) = rows.first() else {
        return Err(HarnessError::EmptyCurve(tag));
    };
    let multiscale = rows.iter().any(|p| p.epoch > 0);
    let mut series: Vec<(usize, f64, f64)> = Vec::new();
    for (i, p) in rows.iter().enumerate() {
        let last_of_epoch = rows.get(i + 1).is_none_or(|next| next.epoch != p.epoch);
        if !multiscale || last_of_epoch {
            series.push((p.step, p.mean, p.stderr));
        }
    }
    series.sort_by_key(|p| p.0);
    Ok(Curve { algorithm: tag, metric: first.metric.clone(), points: series, replicates: first.replicates })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum At {
    /// The largest sample count both curves reach.
    FinalSample,
    /// Each curve's last point at or before `n`; a curve that has stopped
    /// earlier is read off its final plateau.
    SampleCount(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub algorithm_a: String,
    pub algorithm_b: String,
    pub metric: String,
    pub sample_count: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub stderr_a: f64,
    pub stderr_b: f64,
    /// `mean_a - mean_b`.
    pub difference: f64,
    /// `sqrt(stderr_a^2 + stderr_b^2)`.
    pub pooled_stderr: f64,
    /// `|difference| >= 2 pooled_stderr` with a positive pooled error.
    pub significant: bool,
}

impl Comparison {
    /// Difference in units of the pooled standard error.
    pub fn z(&self) -> f64 {
        self.difference / self.pooled_stderr
    }

    /// Whether `a` is lower than `b` by at least `k` pooled standard errors.
    pub fn a_lower_by(&self, k: f64) -> bool {
        self.difference < 0.0 && -self.difference >= k * self.pooled_stderr
    }
}

fn value_at(curve: &Curve, n: usize) -> Result<(f64, f64), HarnessError> {
    curve
        .points
        .iter()
        .rev()
        .find(|p| p.0 <= n)
        .map(|p| (p.1, p.2))
        .ok_or_else(|| HarnessError::EmptyCurve(format!("{} has no point at or before {n}", curve.algorithm)))
}

pub fn compare_curves(a: &Curve, b: &Curve, at: At) -> Result<Comparison, HarnessError> {
    if a.metric != b.metric {
        return Err(HarnessError::MetricMismatch { a: a.metric.clone(), b: b.metric.clone() });
    }
    let last = |c: &Curve| c.points.last().map(|p| p.0).ok_or_else(|| HarnessError::EmptyCurve(c.algorithm.clone()));
    let n = match at {
        At::FinalSample => last(a)?.min(last(b)?),
        At::SampleCount(n) => n,
    };
    let (mean_a, stderr_a) = value_at(a, n)?;
    let (mean_b, stderr_b) = value_at(b, n)?;
    let pooled_stderr = (stderr_a * stderr_a + stderr_b * stderr_b).sqrt();
    let difference = mean_a - mean_b;
    Ok(Comparison {
        algorithm_a: a.algorithm.clone(),
        algorithm_b: b.algorithm.clone(),
        metric: a.metric.clone(),
        sample_count: n,
        mean_a,
        mean_b,
        stderr_a,
        stderr_b,
        difference,
        pooled_stderr,
        significant: pooled_stderr > 0.0 && difference.abs() >= 2.0 * pooled_stderr,
    })
}
