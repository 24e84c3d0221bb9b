use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{Sample, SampleSource};
use crate::analysis::stationary_distribution;
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, SeededRng};

/// The "sticky" family on `n` states: stay with probability `(2m-1)/m`,
/// otherwise move to one of the other states uniformly, each with
/// probability `(1-m)/((n-1)m)`. The stationary law is uniform for every `m`,
/// and the second eigenvalue is `1 - n(1-m)/((n-1)m)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StickyChainKernel {
    num_states: usize,
    stickiness: f64,
}

impl StickyChainKernel {
    pub fn new(num_states: usize, stickiness: f64) -> Result<Self> {
        if num_states < 2 {
            return Err(Error::InvalidKernel(format!("need at least 2 states, got {num_states}")));
        }
        if !(0.5..1.0).contains(&stickiness) {
            return Err(Error::InvalidKernel(format!("stickiness must lie in [1/2, 1), got {stickiness}")));
        }
        Ok(StickyChainKernel { num_states, stickiness })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn stickiness(&self) -> f64 {
        self.stickiness
    }

    pub fn self_probability(&self) -> f64 {
        (2.0 * self.stickiness - 1.0) / self.stickiness
    }

    pub fn off_probability(&self) -> f64 {
        (1.0 - self.stickiness) / ((self.num_states - 1) as f64 * self.stickiness)
    }

    /// Second-largest eigenvalue, equal to its modulus for `m >= 1/2`.
    pub fn second_eigenvalue(&self) -> f64 {
        self.self_probability() - self.off_probability()
    }

    pub fn spectral_gap(&self) -> f64 {
        let n = self.num_states as f64;
        n * (1.0 - self.stickiness) / ((n - 1.0) * self.stickiness)
    }

    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let n = self.num_states;
        let (stay, off) = (self.self_probability(), self.off_probability());
        DMatrix::from_fn(n, n, |i, j| if i == j { stay } else { off })
    }

    pub fn stationary(&self) -> DVector<f64> {
        DVector::from_element(self.num_states, 1.0 / self.num_states as f64)
    }

    pub fn chain(&self) -> FiniteChain {
        FiniteChain::with_stationary(self.transition_matrix(), self.stationary())
            .expect("sticky kernel is a valid ergodic chain")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainInit {
    Stationary,
    FixedState(usize),
}

/// A finite Markov chain sampled by inverse CDF on each row.
#[derive(Clone, Debug)]
pub struct FiniteChain {
    transition: DMatrix<f64>,
    cumulative: Vec<Vec<f64>>,
    stationary: DVector<f64>,
    stationary_cumulative: Vec<f64>,
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn inverse_cdf(cum: &[f64], u: f64) -> usize {
    match cum.iter().position(|&c| u < c) {
        Some(j) => j,
        // rounding left the final cumulative mass just below u
        None => {
            let total = *cum.last().unwrap();
            cum.iter().position(|&c| c >= total).unwrap()
        }
    }
}

impl FiniteChain {
    /// Builds the sampler and solves for the stationary law.
    pub fn new(transition: DMatrix<f64>) -> Result<Self> {
        let pi = stationary_distribution(&transition)?;
        Self::with_stationary(transition, pi)
    }

    pub fn with_stationary(transition: DMatrix<f64>, stationary: DVector<f64>) -> Result<Self> {
        let n = transition.nrows();
        if transition.ncols() != n || n == 0 {
            return Err(Error::InvalidKernel("transition matrix must be square and non-empty".into()));
        }
        if stationary.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: stationary.len() });
        }
        for i in 0..n {
            let row = transition.row(i);
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidKernel(format!("row {i} has a negative or NaN entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidKernel(format!("row {i} sums to {sum}")));
            }
        }
        let cumulative = (0..n).map(|i| cumulative(transition.row(i).iter().copied())).collect();
        let stationary_cumulative = cumulative_vec(&stationary);
        Ok(FiniteChain { transition, cumulative, stationary, stationary_cumulative })
    }

    pub fn num_states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.stationary
    }

    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        inverse_cdf(&self.cumulative[state], rng.random::<f64>())
    }

    pub fn draw_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        inverse_cdf(&self.stationary_cumulative, rng.random::<f64>())
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, init: ChainInit, rng: &mut R) -> Result<usize> {
        match init {
            ChainInit::Stationary => Ok(self.draw_stationary(rng)),
            ChainInit::FixedState(s) if s < self.num_states() => Ok(s),
            ChainInit::FixedState(s) => Err(Error::InvalidArgument(format!(
                "initial state {s} outside 0..{}",
                self.num_states()
            ))),
        }
    }

    pub fn trajectory<R: Rng + ?Sized>(&self, length: usize, init: ChainInit, rng: &mut R) -> Result<Vec<usize>> {
        if length == 0 {
            return Err(Error::InvalidArgument("trajectory length must be at least 1".into()));
        }
        let mut state = self.initial_state(init, rng)?;
        let mut out = Vec::with_capacity(length);
        out.push(state);
        for _ in 1..length {
            state = self.step(state, rng);
            out.push(state);
        }
        Ok(out)
    }
}

fn cumulative_vec(v: &DVector<f64>) -> Vec<f64> {
    cumulative(v.iter().copied())
}

/// Trajectory of the sticky chain (0-based states).
pub fn sticky_chain_stream<R: Rng + ?Sized>(
    kernel: &StickyChainKernel,
    length: usize,
    init: ChainInit,
    rng: &mut R,
) -> Result<Vec<usize>> {
    kernel.chain().trajectory(length, init, rng)
}

/// Emits [`Sample::State`] along a chain trajectory.
#[derive(Debug)]
pub struct ChainSource {
    chain: FiniteChain,
    init: ChainInit,
    state: Option<usize>,
    rng: SeededRng,
}

impl ChainSource {
    pub fn new(chain: FiniteChain, init: ChainInit, seed: u64) -> Self {
        ChainSource { chain, init, state: None, rng: seeded_rng(seed) }
    }

    pub fn chain(&self) -> &FiniteChain {
        &self.chain
    }
}

impl SampleSource for ChainSource {
    fn next_sample(&mut self) -> Result<Sample> {
        let next = match self.state {
            None => self.chain.initial_state(self.init, &mut self.rng)?,
            Some(s) => self.chain.step(s, &mut self.rng),
        };
        self.state = Some(next);
        Ok(Sample::State(next))
    }

    fn stationary_draw(&mut self) -> Result<Sample> {
        Ok(Sample::State(self.chain.draw_stationary(&mut self.rng)))
    }

    fn describe(&self) -> String {
        format!("finite chain on {} states", self.chain.num_states())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn kernel_rejects_bad_parameters() {
        assert!(StickyChainKernel::new(1, 0.9).is_err());
        assert!(StickyChainKernel::new(4, 0.49).is_err());
        assert!(StickyChainKernel::new(4, 1.0).is_err());
        assert!(StickyChainKernel::new(4, 0.5).is_ok());
    }

    #[test]
    fn thirty_state_kernel_rows() {
        let k = StickyChainKernel::new(30, 0.9).unwrap();
        assert!((k.self_probability() - 8.0 / 9.0).abs() < 1e-15);
        for i in 0..30 {
            let s: f64 = k.transition_matrix().row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn half_stickiness_never_stays() {
        // m = 1/2: stay mass 0, each other state 1/3.
        let k = StickyChainKernel::new(4, 0.5).unwrap();
        let mut rng = seeded_rng(11);
        let n = 100_000;
        let traj = sticky_chain_stream(&k, n, ChainInit::Stationary, &mut rng).unwrap();
        let mut counts = [[0usize; 4]; 4];
        for w in traj.windows(2) {
            counts[w[0]][w[1]] += 1;
        }
        for (i, row) in counts.iter().enumerate() {
            let total: usize = row.iter().sum();
            assert_eq!(row[i], 0);
            for (j, &c) in row.iter().enumerate() {
                if i == j {
                    continue;
                }
                let p = 1.0 / 3.0;
                let sd = (total as f64 * p * (1.0 - p)).sqrt();
                assert!((c as f64 - total as f64 * p).abs() < 3.0 * sd, "({i},{j}): {c} of {total}");
            }
        }
    }

    #[test]
    fn very_sticky_chain_mostly_stays() {
        let k = StickyChainKernel::new(30, 0.999).unwrap();
        let mut unchanged = 0usize;
        for seed in 0..50 {
            let traj = sticky_chain_stream(&k, 100, ChainInit::FixedState(3), &mut seeded_rng(seed)).unwrap();
            unchanged += traj.iter().filter(|&&s| s == 3).count();
        }
        assert!(unchanged as f64 / 50.0 >= 90.0, "{unchanged}");
    }

    #[test]
    fn empirical_law_converges_to_uniform() {
        let k = StickyChainKernel::new(30, 0.9).unwrap();
        let traj = sticky_chain_stream(&k, 1_000_000, ChainInit::Stationary, &mut seeded_rng(5)).unwrap();
        let mut hist = [0usize; 30];
        for s in traj {
            hist[s] += 1;
        }
        let tv: f64 = hist.iter().map(|&c| (c as f64 / 1e6 - 1.0 / 30.0).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn identical_seeds_identical_streams() {
        let k = StickyChainKernel::new(7, 0.8).unwrap();
        let a = sticky_chain_stream(&k, 500, ChainInit::Stationary, &mut seeded_rng(3)).unwrap();
        let b = sticky_chain_stream(&k, 500, ChainInit::Stationary, &mut seeded_rng(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_length_rejected_and_fixed_state_checked() {
        let k = StickyChainKernel::new(3, 0.7).unwrap();
        assert!(sticky_chain_stream(&k, 0, ChainInit::Stationary, &mut seeded_rng(0)).is_err());
        assert!(sticky_chain_stream(&k, 5, ChainInit::FixedState(3), &mut seeded_rng(0)).is_err());
        let t = sticky_chain_stream(&k, 5, ChainInit::FixedState(2), &mut seeded_rng(0)).unwrap();
        assert_eq!(t[0], 2);
    }

    #[test]
    fn stationary_draws_pass_chi_square() {
        let k = StickyChainKernel::new(30, 0.95).unwrap();
        let mut src = ChainSource::new(k.chain(), ChainInit::Stationary, 9);
        let draws = crate::sampling::iid_stationary_stream(&mut src, 100_000).unwrap();
        let mut hist = [0f64; 30];
        for d in draws {
            if let Sample::State(s) = d {
                hist[s] += 1.0;
            }
        }
        let expected = 100_000.0 / 30.0;
        let chi2: f64 = hist.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 99th percentile of chi-square with 29 degrees of freedom
        assert!(chi2 < 49.59, "chi2 = {chi2}");
        assert!(crate::sampling::iid_stationary_stream(&mut src, 0).unwrap().is_empty());
    }
}
