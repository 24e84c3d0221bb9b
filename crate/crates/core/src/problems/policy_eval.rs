use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{min_symmetric_eigenvalue, spectral_norm};
use crate::analysis::{exact_value_function, expected_reward, solve_projected_bellman};
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, SeededRng};
use crate::sampling::{ChainInit, FiniteChain, Sample, SampleSource, StickyChainKernel};
use crate::vi::{FeasibleRegion, Point, ProblemConstants, StochasticOracle, ViProblem};

/// Markov reward process with linear features.
///
/// `features` is `d x |S|` with column `s` equal to `psi(s)`; `rewards` holds
/// `R(s, s')`.
#[derive(Clone, Debug, PartialEq)]
pub struct MrpSpec {
    pub transition: DMatrix<f64>,
    pub gamma: f64,
    pub features: DMatrix<f64>,
    pub rewards: DMatrix<f64>,
    /// Replace `Psi` by `Q^{-1/2} Psi` with `Q = Psi Psi^T`.
    pub orthonormalize: bool,
    pub init: ChainInit,
}

impl MrpSpec {
    pub fn new(transition: DMatrix<f64>, gamma: f64, features: DMatrix<f64>, rewards: DMatrix<f64>) -> Result<Self> {
        let spec = MrpSpec { transition, gamma, features, rewards, orthonormalize: false, init: ChainInit::Stationary };
        spec.validate()?;
        Ok(spec)
    }

    /// Sticky chain with truncated one-hot features `psi(s) = e_{min(s, d-1)}`
    /// and reward `R(s, s') = 1{s >= d-1}` (0-based states).
    pub fn sticky(num_states: usize, stickiness: f64, gamma: f64, feature_dim: usize) -> Result<Self> {
        let kernel = StickyChainKernel::new(num_states, stickiness)?;
        if feature_dim == 0 || feature_dim > num_states {
            return Err(Error::InvalidArgument(format!("feature dimension {feature_dim} must lie in 1..={num_states}")));
        }
        let features = DMatrix::from_fn(feature_dim, num_states, |i, s| if i == s.min(feature_dim - 1) { 1.0 } else { 0.0 });
        let rewards = DMatrix::from_fn(num_states, num_states, |s, _| if s + 1 >= feature_dim { 1.0 } else { 0.0 });
        Self::new(kernel.transition_matrix(), gamma, features, rewards)
    }

    pub fn with_orthonormal_features(mut self, on: bool) -> Self {
        self.orthonormalize = on;
        self
    }

    pub fn num_states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.nrows()
    }

    fn validate(&self) -> Result<()> {
        let n = self.transition.nrows();
        if self.transition.ncols() != n {
            return Err(Error::InvalidKernel("transition matrix must be square".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!("discount must lie in [0, 1), got {}", self.gamma)));
        }
        if self.features.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.features.ncols() });
        }
        if self.rewards.shape() != (n, n) {
            return Err(Error::DimensionMismatch { expected: n, found: self.rewards.nrows() });
        }
        Ok(())
    }
}

struct TdOracle {
    dim: usize,
    gamma: f64,
    lipschitz: f64,
}

impl StochasticOracle for TdOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, theta: &Point, sample: &Sample) -> Result<DVector<f64>> {
        let Sample::Transition { phi, phi_next, reward } = sample else {
            return Err(Error::SampleMismatch { expected: "transition", found: sample.kind().name() });
        };
        if phi.len() != self.dim || phi_next.len() != self.dim || theta.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: phi.len() });
        }
        let td = phi.dot(theta) - reward - self.gamma * phi_next.dot(theta);
        Ok(phi * td)
    }

    fn lipschitz_x(&self) -> f64 {
        self.lipschitz
    }
}

/// A solved policy-evaluation instance.
#[derive(Clone, Debug)]
pub struct PolicyEvalInstance {
    pub problem: ViProblem,
    /// Spec with the features actually used by the oracle.
    pub spec: MrpSpec,
    pub chain: FiniteChain,
    /// `r(s) = sum_s' P(s, s') R(s, s')`.
    pub expected_reward: DVector<f64>,
    /// `v* = (I - gamma P)^{-1} r`.
    pub value_function: DVector<f64>,
    /// Solution of the projected Bellman equation.
    pub theta_bar: DVector<f64>,
    /// `F(theta) = A theta - b`.
    pub operator_matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
    /// `max_s |psi(s)|`.
    pub feature_bound: f64,
    /// `max |R(s, s')|`.
    pub reward_bound: f64,
}

impl PolicyEvalInstance {
    pub fn source(&self, seed: u64) -> MrpSource {
        MrpSource {
            chain: self.chain.clone(),
            features: self.spec.features.clone(),
            rewards: self.spec.rewards.clone(),
            init: self.spec.init,
            state: None,
            rng: seeded_rng(seed),
        }
    }

    pub fn stationary(&self) -> &DVector<f64> {
        self.chain.stationary()
    }

    /// Sample for the transition `s -> s'`.
    pub fn transition_sample(&self, s: usize, s_next: usize) -> Sample {
        transition_sample(&self.spec.features, &self.spec.rewards, s, s_next)
    }
}

fn transition_sample(features: &DMatrix<f64>, rewards: &DMatrix<f64>, s: usize, s_next: usize) -> Sample {
    Sample::Transition {
        phi: features.column(s).into_owned(),
        phi_next: features.column(s_next).into_owned(),
        reward: rewards[(s, s_next)],
    }
}

fn inverse_sqrt_psd(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = q.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if !(min > 1e-12 * eig.eigenvalues.max().max(1.0)) {
        return Err(Error::SingularSystem(format!("feature Gram matrix is singular (min eigenvalue {min:e})")));
    }
    let d = eig.eigenvalues.map(|e| 1.0 / e.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// Builds the TD operator problem with `F(theta) = Psi Pi (Psi^T theta - r - gamma P Psi^T theta)`
/// and its root from the direct linear solve.
pub fn policy_eval_problem(spec: &MrpSpec) -> Result<PolicyEvalInstance> {
    spec.validate()?;
    let chain = FiniteChain::new(spec.transition.clone())?;
    let mut spec = spec.clone();
    if spec.orthonormalize {
        let q = &spec.features * spec.features.transpose();
        spec.features = inverse_sqrt_psd(&q)? * &spec.features;
    }
    let psi = &spec.features;
    let pi = chain.stationary();
    let r = expected_reward(&spec.transition, &spec.rewards)?;
    let value_function = exact_value_function(&spec.transition, &r, spec.gamma)?;
    let theta_bar = solve_projected_bellman(&spec.transition, pi, psi, &r, spec.gamma)?;

    let pi_diag = DMatrix::from_diagonal(pi);
    let n = spec.num_states();
    let weighted = psi * &pi_diag;
    let a = &weighted * (DMatrix::identity(n, n) - &spec.transition * spec.gamma) * psi.transpose();
    let b = &weighted * &r;

    let mu = min_symmetric_eigenvalue(&a);
    if !(mu > 0.0) {
        return Err(Error::SingularSystem(format!("TD operator is not strongly monotone (mu = {mu:e})")));
    }
    let lipschitz = spectral_norm(&a);
    let feature_bound = psi.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let reward_bound = spec.rewards.amax();
    let g1 = 1.0 + spec.gamma;
    let d_psi2 = feature_bound * feature_bound;
    let diameter = 2.0 * theta_bar.norm();
    let constants = ProblemConstants {
        lipschitz: Some(lipschitz),
        mu: Some(mu),
        sigma_sq: Some(48.0 * g1 * g1 * d_psi2 * d_psi2 * diameter * diameter + 48.0 * d_psi2 * reward_bound * reward_bound),
        zeta_sq: Some(12.0 * g1 * g1 * d_psi2 * d_psi2),
        diameter: Some(diameter),
    };
    let oracle = TdOracle { dim: spec.feature_dim(), gamma: spec.gamma, lipschitz: g1 * d_psi2 };
    let (a_op, b_op) = (a.clone(), b.clone());
    let problem = ViProblem::new(Arc::new(oracle), FeasibleRegion::Unconstrained)
        .with_mean_operator(Arc::new(move |theta: &Point| &a_op * theta - &b_op))
        .with_solution(theta_bar.clone())
        .with_constants(constants);
    Ok(PolicyEvalInstance {
        problem,
        spec,
        chain,
        expected_reward: r,
        value_function,
        theta_bar,
        operator_matrix: a,
        offset: b,
        feature_bound,
        reward_bound,
    })
}

/// Overlapping transitions `(s_t, s_{t+1})` along one trajectory.
#[derive(Debug)]
pub struct MrpSource {
    chain: FiniteChain,
    features: DMatrix<f64>,
    rewards: DMatrix<f64>,
    init: ChainInit,
    state: Option<usize>,
    rng: SeededRng,
}

impl SampleSource for MrpSource {
    fn next_sample(&mut self) -> Result<Sample> {
        let s = match self.state {
            Some(s) => s,
            None => self.chain.initial_state(self.init, &mut self.rng)?,
        };
        let next = self.chain.step(s, &mut self.rng);
        self.state = Some(next);
        Ok(transition_sample(&self.features, &self.rewards, s, next))
    }

    fn stationary_draw(&mut self) -> Result<Sample> {
        let s = self.chain.draw_stationary(&mut self.rng);
        let next = self.chain.step(s, &mut self.rng);
        Ok(transition_sample(&self.features, &self.rewards, s, next))
    }

    fn describe(&self) -> String {
        format!("reward process on {} states", self.chain.num_states())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_discount_constant_reward_example() {
        let p = DMatrix::from_element(3, 3, 1.0 / 3.0);
        let spec = MrpSpec::new(p, 0.0, DMatrix::identity(3, 3), DMatrix::from_element(3, 3, 1.0)).unwrap();
        let inst = policy_eval_problem(&spec).unwrap();
        for s in 0..3 {
            let g = inst.problem.oracle.evaluate(&DVector::zeros(3), &inst.transition_sample(s, (s + 1) % 3)).unwrap();
            let mut e = DVector::zeros(3);
            e[s] = -1.0;
            assert_eq!(g, e);
        }
    }

    #[test]
    fn two_state_flip_chain() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let spec = MrpSpec::new(p, 0.5, DMatrix::identity(2, 2), DMatrix::from_element(2, 2, 1.0)).unwrap();
        let inst = policy_eval_problem(&spec).unwrap();
        assert!((&inst.value_function - DVector::from_element(2, 2.0)).amax() < 1e-12);
        assert!((&inst.theta_bar - DVector::from_element(2, 2.0)).amax() < 1e-12);
    }

    #[test]
    fn sticky_configuration_shape() {
        let spec = MrpSpec::sticky(30, 0.9, 0.8, 16).unwrap();
        assert_eq!(spec.features.shape(), (16, 30));
        assert_eq!(spec.features[(15, 29)], 1.0);
        assert_eq!(spec.features[(14, 14)], 1.0);
        assert_eq!(spec.rewards[(14, 0)], 0.0);
        assert_eq!(spec.rewards[(15, 0)], 1.0);
        let inst = policy_eval_problem(&spec).unwrap();
        let f = inst.problem.mean(&inst.theta_bar).unwrap();
        assert!(f.norm() < 1e-10);
    }

    #[test]
    fn exact_enumeration_reproduces_mean_operator() {
        let p = DMatrix::from_row_slice(3, 3, &[0.1, 0.6, 0.3, 0.5, 0.25, 0.25, 0.2, 0.2, 0.6]);
        let psi = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.2, 0.0, 1.0, 0.7]);
        let r = DMatrix::from_fn(3, 3, |i, j| (i as f64) - 0.5 * j as f64);
        let inst = policy_eval_problem(&MrpSpec::new(p.clone(), 0.7, psi, r).unwrap()).unwrap();
        let theta = DVector::from_vec(vec![0.3, -1.2]);
        let pi = inst.stationary().clone();
        let mut avg = DVector::zeros(2);
        for s in 0..3 {
            for t in 0..3 {
                avg += inst.problem.oracle.evaluate(&theta, &inst.transition_sample(s, t)).unwrap() * (pi[s] * p[(s, t)]);
            }
        }
        assert!((avg - inst.problem.mean(&theta).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn orthonormalized_features() {
        let spec = MrpSpec::sticky(6, 0.8, 0.5, 3).unwrap().with_orthonormal_features(true);
        let inst = policy_eval_problem(&spec).unwrap();
        let q = &inst.spec.features * inst.spec.features.transpose();
        assert!((q - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
        assert!(inst.problem.mean(&inst.theta_bar).unwrap().norm() < 1e-10);
    }

    #[test]
    fn corollary_constants() {
        let inst = policy_eval_problem(&MrpSpec::sticky(5, 0.75, 0.5, 5).unwrap()).unwrap();
        let c = inst.problem.constants;
        let d = 2.0 * inst.theta_bar.norm();
        assert!((c.zeta_sq.unwrap() - 12.0 * 2.25).abs() < 1e-12);
        assert!((c.sigma_sq.unwrap() - (48.0 * 2.25 * d * d + 48.0)).abs() < 1e-9);
        assert!((inst.problem.oracle.lipschitz_x() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn source_emits_overlapping_transitions() {
        let inst = policy_eval_problem(&MrpSpec::sticky(4, 0.6, 0.5, 4).unwrap()).unwrap();
        let mut src = inst.source(3);
        let samples = crate::sampling::collect_trajectory(&mut src, 50).unwrap();
        for w in samples.windows(2) {
            let (Sample::Transition { phi_next, .. }, Sample::Transition { phi, .. }) = (&w[0], &w[1]) else {
                unreachable!()
            };
            assert_eq!(phi_next, phi);
        }
    }
}
