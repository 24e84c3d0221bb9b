use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Sample, SampleSource};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng, SeededRng};

/// Covariate generator `a_{t+1} = A a_t + eps_t` with a symmetric `A`.
///
/// `A = Q E Q^T` where `Q` is Haar-random orthonormal, the first `num_large`
/// entries of `E` equal `large_eigenvalue` and the rest are Gaussian with
/// standard deviation `small_eig_std`, clamped to `[-0.9, 0.9]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArProcessConfig {
    pub dimension: usize,
    pub num_large: usize,
    #[serde(default = "default_large")]
    pub large_eigenvalue: f64,
    #[serde(default = "default_small_std")]
    pub small_eig_std: f64,
    #[serde(default = "default_noise_var")]
    pub noise_variance: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_large() -> f64 {
    0.995
}
fn default_small_std() -> f64 {
    1e-2
}
fn default_noise_var() -> f64 {
    1e-2
}
fn default_burn_in() -> usize {
    10_000
}

impl ArProcessConfig {
    pub fn new(dimension: usize, num_large: usize, seed: u64) -> Self {
        ArProcessConfig {
            dimension,
            num_large,
            large_eigenvalue: default_large(),
            small_eig_std: default_small_std(),
            noise_variance: default_noise_var(),
            burn_in: default_burn_in(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::InvalidArgument("AR dimension must be positive".into()));
        }
        if self.num_large > self.dimension {
            return Err(Error::InvalidArgument(format!(
                "num_large = {} exceeds dimension {}",
                self.num_large, self.dimension
            )));
        }
        if !(self.large_eigenvalue.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "large eigenvalue {} makes the process unstable",
                self.large_eigenvalue
            )));
        }
        if !(self.small_eig_std >= 0.0) || !(self.noise_variance >= 0.0) {
            return Err(Error::InvalidArgument("standard deviations must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ArMatrix {
    pub matrix: DMatrix<f64>,
    /// Diagonal of `E`, in construction order.
    pub eigenvalues: DVector<f64>,
    /// The orthonormal `Q`.
    pub basis: DMatrix<f64>,
}

impl ArMatrix {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    }

    /// Per-eigendirection stationary variances `s^2 / (1 - e_i^2)`.
    pub fn stationary_variances(&self, noise_variance: f64) -> DVector<f64> {
        self.eigenvalues.map(|e| noise_variance / (1.0 - e * e))
    }

    /// `Lambda = Q diag(s^2 / (1 - e_i^2)) Q^T`, the solution of `Lambda = A Lambda A^T + s^2 I`.
    pub fn stationary_covariance(&self, noise_variance: f64) -> DMatrix<f64> {
        let scaled = &self.basis * DMatrix::from_diagonal(&self.stationary_variances(noise_variance));
        let cov = scaled * self.basis.transpose();
        (&cov + cov.transpose()) * 0.5
    }
}

fn haar_orthonormal(n: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let gaussian = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gaussian.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix makes the distribution exactly Haar
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn build_ar_matrix(config: &ArProcessConfig) -> Result<ArMatrix> {
    config.validate()?;
    let d = config.dimension;
    let mut rng = seeded_rng(derive_seed(config.seed, "ar-matrix", 0));
    let eigenvalues = DVector::from_fn(d, |i, _| {
        if i < config.num_large {
            config.large_eigenvalue
        } else {
            let e: f64 = rng.sample::<f64, _>(StandardNormal) * config.small_eig_std;
            e.clamp(-0.9, 0.9)
        }
    });
    let basis = haar_orthonormal(d, &mut rng);
    let a = &basis * DMatrix::from_diagonal(&eigenvalues) * basis.transpose();
    let matrix = (&a + a.transpose()) * 0.5;
    Ok(ArMatrix { matrix, eigenvalues, basis })
}

/// How [`ArProcess::stationary_draw`] produces independent stationary covariates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationaryMethod {
    /// Exact Gaussian draw from `N(0, Lambda)`.
    #[default]
    Exact,
    /// A fresh chain started at zero and run for `burn_in` steps.
    Restart,
}

/// Running AR trajectory. The chain starts at zero and performs its burn-in
/// on the first request.
#[derive(Debug)]
pub struct ArProcess {
    matrix: Arc<ArMatrix>,
    noise_std: f64,
    burn_in: usize,
    state: Option<DVector<f64>>,
    rng: SeededRng,
    stationary_method: StationaryMethod,
}

impl ArProcess {
    pub fn new(matrix: Arc<ArMatrix>, config: &ArProcessConfig, seed: u64) -> Self {
        ArProcess {
            matrix,
            noise_std: config.noise_variance.sqrt(),
            burn_in: config.burn_in,
            state: None,
            rng: seeded_rng(seed),
            stationary_method: StationaryMethod::Exact,
        }
    }

    pub fn with_stationary_method(mut self, method: StationaryMethod) -> Self {
        self.stationary_method = method;
        self
    }

    fn noise(&mut self) -> DVector<f64> {
        let std = self.noise_std;
        let rng = &mut self.rng;
        DVector::from_fn(self.matrix.dimension(), |_, _| rng.sample::<f64, _>(StandardNormal) * std)
    }

    fn advance(&mut self, a: &DVector<f64>) -> DVector<f64> {
        &self.matrix.matrix * a + self.noise()
    }

    fn burned_in_start(&mut self) -> DVector<f64> {
        let mut a = DVector::zeros(self.matrix.dimension());
        for _ in 0..self.burn_in {
            a = self.advance(&a);
        }
        a
    }

    pub fn next_covariate(&mut self) -> DVector<f64> {
        let next = match self.state.take() {
            None => self.burned_in_start(),
            Some(a) => self.advance(&a),
        };
        self.state = Some(next.clone());
        next
    }

    pub fn stationary_covariate(&mut self) -> DVector<f64> {
        match self.stationary_method {
            StationaryMethod::Exact => {
                let scales = self.matrix.stationary_variances(self.noise_std * self.noise_std).map(f64::sqrt);
                let rng = &mut self.rng;
                let z = DVector::from_fn(scales.len(), |i, _| rng.sample::<f64, _>(StandardNormal) * scales[i]);
                &self.matrix.basis * z
            }
            StationaryMethod::Restart => self.burned_in_start(),
        }
    }
}

impl SampleSource for ArProcess {
    fn next_sample(&mut self) -> Result<Sample> {
        Ok(Sample::Vector(self.next_covariate()))
    }

    fn stationary_draw(&mut self) -> Result<Sample> {
        Ok(Sample::Vector(self.stationary_covariate()))
    }

    fn describe(&self) -> String {
        format!("AR({}) covariate process", self.matrix.dimension())
    }
}

/// `length` covariates after the configured burn-in from zero.
pub fn ar_stream(config: &ArProcessConfig, length: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if length == 0 {
        return Err(Error::InvalidArgument("stream length must be at least 1".into()));
    }
    let matrix = Arc::new(build_ar_matrix(config)?);
    let mut process = ArProcess::new(matrix, config, seed);
    Ok((0..length).map(|_| process.next_covariate()).collect())
}
