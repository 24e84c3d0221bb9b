//! Seeded sample streams and the replay buffer that stores them.

mod ar;
mod buffer;
mod chain;
mod sample;

pub use ar::{ar_stream, build_ar_matrix, ArMatrix, ArProcess, ArProcessConfig, StationaryMethod};
pub use buffer::{buffer_get, BufferMode, ReplayBuffer};
pub use chain::{sticky_chain_stream, ChainInit, ChainSource, FiniteChain, StickyChainKernel};
pub use sample::{Sample, SampleKind};

use crate::error::{Error, Result};

/// A stateful generator of samples.
pub trait SampleSource: Send {
    /// Next sample along the (possibly Markovian) trajectory.
    fn next_sample(&mut self) -> Result<Sample>;

    /// An independent draw from the stationary law.
    fn stationary_draw(&mut self) -> Result<Sample> {
        Err(Error::NoStationarySampler(self.describe()))
    }

    fn describe(&self) -> String;
}

impl<S: SampleSource + ?Sized> SampleSource for Box<S> {
    fn next_sample(&mut self) -> Result<Sample> {
        (**self).next_sample()
    }
    fn stationary_draw(&mut self) -> Result<Sample> {
        (**self).stationary_draw()
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// `length` mutually independent stationary draws.
pub fn iid_stationary_stream<S: SampleSource + ?Sized>(source: &mut S, length: usize) -> Result<Vec<Sample>> {
    (0..length).map(|_| source.stationary_draw()).collect()
}

/// Pulls `length` consecutive samples off a trajectory.
pub fn collect_trajectory<S: SampleSource + ?Sized>(source: &mut S, length: usize) -> Result<Vec<Sample>> {
    (0..length).map(|_| source.next_sample()).collect()
}
