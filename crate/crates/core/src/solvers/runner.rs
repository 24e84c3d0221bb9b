use super::trace::{RunSettings, RunTrace, TraceRecord};
use crate::error::{Error, Result};
use crate::sampling::{ReplayBuffer, Sample};
use crate::vi::{sa_step_detailed, step_displacement_check, Point, ViProblem};

/// Shared SA loop over a prepared sequence of `(buffer index, sample)` pairs.
pub(crate) struct Run<'a> {
    pub problem: &'a ViProblem,
    pub settings: &'a RunSettings,
    pub epoch: usize,
    /// Oracle calls made before this run (earlier MER epochs).
    pub offset: u64,
}

impl Run<'_> {
    pub(crate) fn execute<I>(&self, x_init: Point, horizon: usize, samples: I) -> Result<RunTrace>
    where
        I: IntoIterator<Item = Result<(usize, Sample)>>,
    {
        let (step_rule, note) = self.settings.step.resolve(horizon)?;
        let probe = self.settings.probe.as_ref();
        let mut trace = RunTrace {
            algorithm: self.settings.algorithm.clone(),
            seed: self.settings.seed,
            epoch: self.epoch,
            metric: probe.map(|p| p.metric.tag()),
            records: Vec::new(),
            final_iterate: x_init.clone(),
            averaged_iterate: None,
            indices: Vec::with_capacity(horizon),
            contraction_checks: 0,
            notes: note.into_iter().collect(),
        };
        let mut x = x_init;
        let mut avg: Option<Point> = None;
        for (i, item) in samples.into_iter().enumerate() {
            let (index, sample) = item?;
            let t = i + 1;
            let eta = step_rule.at(t);
            let global = self.offset + t as u64;
            let out = sa_step_detailed(self.problem, &x, &sample, eta, global)?;
            if self.settings.check_contraction {
                if !step_displacement_check(&out.next, &x, &out.operator_value, eta) {
                    return Err(Error::ContractionViolated {
                        step: global,
                        displacement: (&out.next - &x).norm(),
                        bound: 2.0 * eta * out.operator_value.norm(),
                    });
                }
                trace.contraction_checks += 1;
            }
            x = out.next;
            if self.settings.averaging {
                avg = Some(match avg {
                    None => x.clone(),
                    Some(a) => &a + (&x - &a) / t as f64,
                });
            }
            trace.indices.push(index);
            if self.settings.record.keeps(t, horizon) {
                let reported = avg.as_ref().unwrap_or(&x);
                let error = probe.map(|p| p.error(reported)).transpose()?;
                trace.records.push(TraceRecord { samples_consumed: global, step: t, buffer_index: index, eta, error });
            }
        }
        trace.final_iterate = x;
        trace.averaged_iterate = avg;
        Ok(trace)
    }
}

fn check_skip(skip: usize, len: usize) -> Result<()> {
    if skip == 0 || skip > len {
        return Err(Error::InvalidSkip { skip, len });
    }
    Ok(())
}

fn strided<'a>(buffer: &'a ReplayBuffer, gap: usize, steps: usize) -> impl Iterator<Item = Result<(usize, Sample)>> + 'a {
    (1..=steps).map(move |t| {
        let index = t * gap;
        buffer.peek(index).map(|s| (index, s.clone()))
    })
}

/// Serial SA (TD): one step per buffer entry in causal order.
///
/// Baselines read the buffer without consuming it, whatever its mode.
pub fn run_serial_sa(problem: &ViProblem, buffer: &ReplayBuffer, x_init: Point, settings: &RunSettings) -> Result<RunTrace> {
    run_skipped_sa(problem, buffer, 1, x_init, settings)
}

/// Skipped SA (CTD): `floor(B / skip)` steps on `xi_skip, xi_2skip, ...`.
pub fn run_skipped_sa(
    problem: &ViProblem,
    buffer: &ReplayBuffer,
    skip: usize,
    x_init: Point,
    settings: &RunSettings,
) -> Result<RunTrace> {
    check_skip(skip, buffer.len())?;
    let steps = buffer.len() / skip;
    let run = Run { problem, settings, epoch: 0, offset: 0 };
    run.execute(x_init, steps, strided(buffer, skip, steps))
}

/// Replay gap `max(1, round(beta * tau_M))`.
pub fn sser_gap(beta: f64, tau_m: f64) -> usize {
    ((beta * tau_m).round() as usize).max(1)
}

/// Serial skipped experience replay: `num_steps` steps at gap `round(beta tau_M)`.
pub fn run_sser(
    problem: &ViProblem,
    buffer: &ReplayBuffer,
    beta: f64,
    tau_m: f64,
    num_steps: usize,
    x_init: Point,
    settings: &RunSettings,
) -> Result<RunTrace> {
    if !(beta > 0.0) || !(tau_m >= 0.0) {
        return Err(Error::InvalidArgument(format!("beta = {beta} and tau_M = {tau_m} must be positive")));
    }
    let gap = sser_gap(beta, tau_m);
    if gap.saturating_mul(num_steps) > buffer.len() {
        return Err(Error::InsufficientBuffer { len: buffer.len(), gap, steps: num_steps });
    }
    let run = Run { problem, settings, epoch: 0, offset: 0 };
    run.execute(x_init, num_steps, strided(buffer, gap, num_steps))
}

/// SA on independent stationary draws; `stream[t-1]` feeds step `t`.
pub fn run_iid_sa(
    problem: &ViProblem,
    stream: &[Sample],
    num_steps: usize,
    x_init: Point,
    settings: &RunSettings,
) -> Result<RunTrace> {
    if stream.len() < num_steps {
        return Err(Error::InsufficientBuffer { len: stream.len(), gap: 1, steps: num_steps });
    }
    let run = Run { problem, settings, epoch: 0, offset: 0 };
    let items = stream.iter().take(num_steps).enumerate().map(|(i, s)| Ok((i + 1, s.clone())));
    run.execute(x_init, num_steps, items)
}
