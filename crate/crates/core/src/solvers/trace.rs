use serde::Serialize;

use super::schedule::StepSizePolicy;
use crate::analysis::{compute_error, ErrorMetric};
use crate::error::Result;
use crate::vi::Point;

/// Error of the solver output against a known solution.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorProbe {
    pub metric: ErrorMetric,
    pub solution: Point,
}

impl ErrorProbe {
    pub fn new(metric: ErrorMetric, solution: Point) -> Self {
        ErrorProbe { metric, solution }
    }

    pub fn error(&self, x: &Point) -> Result<f64> {
        compute_error(&self.metric, x, &self.solution)
    }
}

/// Which steps produce a [`TraceRecord`]. The last step is always recorded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RecordSchedule {
    #[default]
    Every,
    Stride(usize),
    PowersOfTwo,
    Final,
}

impl RecordSchedule {
    pub(crate) fn keeps(&self, step: usize, last: usize) -> bool {
        step == last
            || match *self {
                RecordSchedule::Every => true,
                RecordSchedule::Stride(s) => s > 0 && step % s == 0,
                RecordSchedule::PowersOfTwo => step.is_power_of_two(),
                RecordSchedule::Final => false,
            }
    }
}

/// Options shared by every solver.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub step: StepSizePolicy,
    /// Report the running average of the iterates instead of the last one.
    pub averaging: bool,
    pub probe: Option<ErrorProbe>,
    /// Fail with `ContractionViolated` when a step moves further than `2 eta |F~|`.
    pub check_contraction: bool,
    pub record: RecordSchedule,
    pub algorithm: String,
    pub seed: u64,
}

impl RunSettings {
    pub fn new(algorithm: impl Into<String>, step: StepSizePolicy) -> Self {
        RunSettings {
            step,
            averaging: false,
            probe: None,
            check_contraction: cfg!(debug_assertions),
            record: RecordSchedule::Every,
            algorithm: algorithm.into(),
            seed: 0,
        }
    }

    pub fn with_averaging(mut self, on: bool) -> Self {
        self.averaging = on;
        self
    }

    pub fn with_probe(mut self, probe: ErrorProbe) -> Self {
        self.probe = Some(probe);
        self
    }

    pub fn with_record(mut self, record: RecordSchedule) -> Self {
        self.record = record;
        self
    }

    pub fn with_contraction_check(mut self, on: bool) -> Self {
        self.check_contraction = on;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    /// Oracle calls made so far by this run (across epochs for MER).
    pub samples_consumed: u64,
    /// Step within the run or epoch, 1-based.
    pub step: usize,
    /// Buffer position (or stream position) of the sample used.
    pub buffer_index: usize,
    pub eta: f64,
    /// Error of the reported output after this step.
    pub error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub algorithm: String,
    pub seed: u64,
    /// MER epoch, 0 for single-scale solvers.
    pub epoch: usize,
    pub metric: Option<String>,
    pub records: Vec<TraceRecord>,
    pub final_iterate: Point,
    pub averaged_iterate: Option<Point>,
    /// Every buffer index visited, in order.
    pub indices: Vec<usize>,
    pub contraction_checks: u64,
    pub notes: Vec<String>,
}

impl RunTrace {
    /// The averaged iterate when averaging was on, else the last iterate.
    pub fn output(&self) -> &Point {
        self.averaged_iterate.as_ref().unwrap_or(&self.final_iterate)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.error)
    }

    pub fn steps(&self) -> usize {
        self.indices.len()
    }
}
