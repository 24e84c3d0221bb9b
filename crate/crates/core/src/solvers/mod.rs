//! Serial SA, skipped SA, multiscale experience replay (MER), serial skipped
//! experience replay (SSER) and i.i.d. SA.
//!
//! Every solver is a loop of [`crate::vi::sa_step`] calls over an index
//! sequence into a buffer; they differ only in which indices they visit and
//! which step size they use. MER epoch `k` visits `t * B / 2^k` for
//! `t = 1..2^k`, so its last epoch (gap 1) is serial SA and epoch `k` is
//! skipped SA with skip `B / 2^k`.

mod mer;
mod runner;
mod schedule;
mod trace;

pub use mer::run_mer;
pub use runner::{run_iid_sa, run_serial_sa, run_skipped_sa, run_sser, sser_gap};
pub use schedule::{
    alpha, effective_mixing_time, m_constant, theorem_step_size, EpochSchedule, EpochSpec, PInputs,
    ReinitPolicy, StepSizePolicy, TheoremConstants,
};
pub use trace::{ErrorProbe, RecordSchedule, RunSettings, RunTrace, TraceRecord};
