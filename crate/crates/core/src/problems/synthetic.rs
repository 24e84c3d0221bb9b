use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{min_symmetric_eigenvalue, spectral_norm};
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, SeededRng};
use crate::sampling::{Sample, SampleSource};
use crate::vi::{FeasibleRegion, Point, ProblemConstants, StochasticOracle, ViProblem};

/// `F(x) = A (x - x*)` observed through additive zero-mean noise.
///
/// The noise term is read off the sample: a [`Sample::Vector`] is used as the
/// noise itself, a [`Sample::State`] selects a column of `state_offsets`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticLinearSpec {
    pub operator: DMatrix<f64>,
    pub x_star: DVector<f64>,
    pub noise_std: f64,
    /// `n x |S|` offsets with zero mean under the chain's stationary law.
    pub state_offsets: Option<DMatrix<f64>>,
    /// Stationary law of the chain driving `state_offsets`.
    pub state_weights: Option<DVector<f64>>,
    pub region: FeasibleRegion,
}

impl SyntheticLinearSpec {
    pub fn new(operator: DMatrix<f64>, x_star: DVector<f64>, noise_std: f64) -> Self {
        SyntheticLinearSpec {
            operator,
            x_star,
            noise_std,
            state_offsets: None,
            state_weights: None,
            region: FeasibleRegion::Unconstrained,
        }
    }

    /// Attaches Gaussian offsets per chain state, re-centered so their
    /// `pi`-weighted mean is exactly representable as zero.
    pub fn with_chain_offsets<R: Rng + ?Sized>(mut self, pi: &DVector<f64>, rng: &mut R) -> Self {
        let n = self.x_star.len();
        let std = self.noise_std;
        let mut offsets = DMatrix::from_fn(n, pi.len(), |_, _| rng.sample::<f64, _>(StandardNormal) * std);
        let mean = &offsets * pi;
        for mut col in offsets.column_iter_mut() {
            col -= &mean;
        }
        self.state_offsets = Some(offsets);
        self.state_weights = Some(pi.clone());
        self
    }

    pub fn with_region(mut self, region: FeasibleRegion) -> Self {
        self.region = region;
        self
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    /// `E |F~(x, xi) - F(x)|^2` under the stationary law of the driving samples.
    pub fn noise_variance(&self) -> f64 {
        match (&self.state_offsets, &self.state_weights) {
            (Some(o), Some(pi)) => o.column_iter().zip(pi.iter()).map(|(c, p)| p * c.norm_squared()).sum(),
            _ => self.dim() as f64 * self.noise_std * self.noise_std,
        }
    }

    /// Source of i.i.d. Gaussian noise samples for this spec.
    pub fn noise_source(&self, seed: u64) -> SyntheticNoiseSource {
        SyntheticNoiseSource { dim: self.dim(), std: self.noise_std, rng: seeded_rng(seed) }
    }
}

struct SyntheticOracle {
    operator: DMatrix<f64>,
    x_star: DVector<f64>,
    offsets: Option<DMatrix<f64>>,
    lipschitz: f64,
}

impl StochasticOracle for SyntheticOracle {
    fn dim(&self) -> usize {
        self.x_star.len()
    }

    fn evaluate(&self, x: &Point, sample: &Sample) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let mean = &self.operator * (x - &self.x_star);
        match (sample, &self.offsets) {
            (Sample::Vector(w), _) if w.len() == self.dim() => Ok(mean + w),
            (Sample::Vector(w), _) => Err(Error::DimensionMismatch { expected: self.dim(), found: w.len() }),
            (Sample::State(s), Some(o)) if *s < o.ncols() => Ok(mean + o.column(*s)),
            (Sample::State(s), Some(o)) => Err(Error::IndexOutOfRange { index: *s, len: o.ncols() }),
            (other, _) => Err(Error::SampleMismatch { expected: "vector", found: other.kind().name() }),
        }
    }

    fn lipschitz_x(&self) -> f64 {
        self.lipschitz
    }

    fn lipschitz_sample(&self) -> Option<f64> {
        self.offsets.is_none().then_some(1.0)
    }
}

/// Builds the problem with every constant in closed form:
/// `mu = lambda_min(sym A)`, `L = |A|_2`, `zeta^2 = 0`.
pub fn synthetic_linear_problem(spec: &SyntheticLinearSpec) -> Result<ViProblem> {
    let n = spec.dim();
    if spec.operator.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, found: spec.operator.nrows() });
    }
    let mu = min_symmetric_eigenvalue(&spec.operator);
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("symmetric part of the operator is not positive definite (min eigenvalue {mu:e})")));
    }
    if let Some(o) = &spec.state_offsets {
        if o.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: o.nrows() });
        }
    }
    let lipschitz = spectral_norm(&spec.operator);
    let oracle = SyntheticOracle {
        operator: spec.operator.clone(),
        x_star: spec.x_star.clone(),
        offsets: spec.state_offsets.clone(),
        lipschitz,
    };
    let (a, x_star) = (spec.operator.clone(), spec.x_star.clone());
    let constants = ProblemConstants {
        lipschitz: Some(lipschitz),
        mu: Some(mu),
        sigma_sq: Some(2.0 * spec.noise_variance()),
        zeta_sq: Some(0.0),
        diameter: None,
    };
    Ok(ViProblem::new(Arc::new(oracle), spec.region.clone())
        .with_mean_operator(Arc::new(move |x: &Point| &a * (x - &x_star)))
        .with_solution(spec.x_star.clone())
        .with_constants(constants))
}

/// I.i.d. `N(0, std^2 I)` vectors.
#[derive(Debug)]
pub struct SyntheticNoiseSource {
    dim: usize,
    std: f64,
    rng: SeededRng,
}

impl SampleSource for SyntheticNoiseSource {
    fn next_sample(&mut self) -> Result<Sample> {
        let (std, rng) = (self.std, &mut self.rng);
        Ok(Sample::Vector(DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal) * std)))
    }

    fn stationary_draw(&mut self) -> Result<Sample> {
        self.next_sample()
    }

    fn describe(&self) -> String {
        format!("i.i.d. Gaussian noise in dimension {}", self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vi::sa_step;

    #[test]
    fn identity_operator_solves_in_one_step() {
        let spec = SyntheticLinearSpec::new(DMatrix::identity(3, 3), DVector::zeros(3), 0.0);
        let p = synthetic_linear_problem(&spec).unwrap();
        let x = DVector::from_vec(vec![4.0, -2.0, 0.5]);
        let next = sa_step(&p, &x, &Sample::Vector(DVector::zeros(3)), 1.0).unwrap();
        assert_eq!(next, DVector::zeros(3));
    }

    #[test]
    fn diagonal_constants() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let p = synthetic_linear_problem(&SyntheticLinearSpec::new(a, DVector::zeros(2), 0.0)).unwrap();
        assert!((p.constants.mu.unwrap() - 1.0).abs() < 1e-12);
        assert!((p.constants.lipschitz.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_contraction_is_geometric() {
        let x_star = DVector::from_vec(vec![1.0, -1.0]);
        let p = synthetic_linear_problem(&SyntheticLinearSpec::new(DMatrix::identity(2, 2), x_star.clone(), 0.0)).unwrap();
        let mut x = DVector::from_vec(vec![3.0, 2.0]);
        let zero = Sample::Vector(DVector::zeros(2));
        let mut err = (&x - &x_star).norm();
        for _ in 0..20 {
            x = sa_step(&p, &x, &zero, 0.1).unwrap();
            let next = (&x - &x_star).norm();
            assert!((next / err - 0.9).abs() < 1e-12);
            err = next;
        }
    }

    #[test]
    fn indefinite_operator_rejected() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        assert!(synthetic_linear_problem(&SyntheticLinearSpec::new(a, DVector::zeros(2), 0.0)).is_err());
    }

    #[test]
    fn chain_offsets_are_centered() {
        let pi = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let spec = SyntheticLinearSpec::new(DMatrix::identity(2, 2), DVector::zeros(2), 1.0)
            .with_chain_offsets(&pi, &mut seeded_rng(1));
        let o = spec.state_offsets.as_ref().unwrap();
        assert!((o * &pi).amax() < 1e-14);
        let p = synthetic_linear_problem(&spec).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.1]);
        let mean: DVector<f64> = (0..3).map(|s| p.oracle.evaluate(&x, &Sample::State(s)).unwrap() * pi[s]).sum();
        assert!((mean - p.mean(&x).unwrap()).amax() < 1e-14);
    }
}
