use rand::Rng;

use super::runner::Run;
use super::schedule::{EpochSchedule, ReinitPolicy};
use super::trace::{RunSettings, RunTrace};
use crate::error::{Error, Result};
use crate::sampling::{BufferMode, ReplayBuffer};
use crate::vi::ViProblem;

/// Multiscale experience replay.
///
/// Epoch `k` restarts from `reinit`, then takes `T_k = 2^k` steps on buffer
/// indices `t * tau_k` with the step size resolved for horizon `T_k`. In
/// dynamic mode every read deletes the sample and appends a fresh one, and
/// indices refer to the buffer as it stands at the time of the read.
///
/// Returns one trace per epoch.
pub fn run_mer<R: Rng + ?Sized>(
    problem: &ViProblem,
    buffer: &mut ReplayBuffer,
    schedule: &EpochSchedule,
    reinit: &ReinitPolicy,
    settings: &RunSettings,
    rng: &mut R,
) -> Result<Vec<RunTrace>> {
    if schedule.buffer_size != buffer.len() {
        return Err(Error::InvalidSchedule(format!(
            "schedule expects a buffer of {} samples, buffer holds {}",
            schedule.buffer_size,
            buffer.len()
        )));
    }
    let mut traces = Vec::with_capacity(schedule.num_epochs());
    let mut offset = 0u64;
    for epoch in &schedule.epochs {
        let x_init = reinit.draw(rng);
        let run = Run { problem, settings, epoch: epoch.k, offset };
        let mode = buffer.mode();
        let buf = &mut *buffer;
        let samples = schedule.indices(epoch).map(move |index| match mode {
            BufferMode::Static => buf.peek(index).map(|s| (index, s.clone())),
            BufferMode::Dynamic => buf.get(index).map(|s| (index, s)),
        });
        let trace = run.execute(x_init, epoch.steps, samples)?;
        offset += epoch.steps as u64;
        traces.push(trace);
    }
    Ok(traces)
}
