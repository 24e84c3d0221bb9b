use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::unit_sphere_point;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng, SeededRng};
use crate::sampling::{build_ar_matrix, ArMatrix, ArProcess, ArProcessConfig, Sample, SampleSource};
use crate::vi::{FeasibleRegion, Point, ProblemConstants, StochasticOracle, ViProblem};

/// Monotone link function `f`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Link {
    Sigmoid,
    Identity,
    /// `f(z) = mu_f z + (L_f - mu_f) softplus(z)`, whose slope sweeps `(mu_f, L_f)`.
    CustomMonotone { mu_f: f64, l_f: f64 },
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Link {
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Link::Sigmoid => sigmoid(z),
            Link::Identity => z,
            Link::CustomMonotone { mu_f, l_f } => mu_f * z + (l_f - mu_f) * softplus(z),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            Link::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Link::Identity => 1.0,
            Link::CustomMonotone { mu_f, l_f } => mu_f + (l_f - mu_f) * sigmoid(z),
        }
    }

    /// Global Lipschitz constant `L_f`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Link::Sigmoid => 0.25,
            Link::Identity => 1.0,
            Link::CustomMonotone { l_f, .. } => l_f,
        }
    }

    /// Strong-monotonicity modulus of `f` on `[-z_max, z_max]`.
    pub fn monotonicity_on(&self, z_max: f64) -> f64 {
        match *self {
            Link::Sigmoid => self.derivative(z_max.abs()),
            Link::Identity => 1.0,
            Link::CustomMonotone { .. } => self.derivative(-z_max.abs()),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Link::CustomMonotone { mu_f, l_f } = *self {
            if !(mu_f > 0.0 && l_f >= mu_f && l_f.is_finite()) {
                return Err(Error::InvalidArgument(format!("custom link needs 0 < mu_f <= L_f, got ({mu_f}, {l_f})")));
            }
        }
        Ok(())
    }
}

/// Generalized linear model `y = f(a^T x*) + v`, `v ~ N(0, noise_std^2)`,
/// with AR covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmSpec {
    pub link: Link,
    /// Planted signal; drawn uniformly on the unit sphere from `seed` when absent.
    #[serde(default)]
    pub x_star: Option<Vec<f64>>,
    pub noise_std: f64,
    /// Covariate norm bound `D_a`; the largest norm among the reference draws when absent.
    #[serde(default)]
    pub covariate_bound: Option<f64>,
    pub covariates: ArProcessConfig,
    /// Number of stationary covariates used for the Monte Carlo mean operator.
    #[serde(default = "default_reference")]
    pub reference_samples: usize,
    /// Radius of a ball around the origin constraining the iterates.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_reference() -> usize {
    2048
}

impl GlmSpec {
    pub fn new(link: Link, covariates: ArProcessConfig, noise_std: f64, seed: u64) -> Self {
        GlmSpec {
            link,
            x_star: None,
            noise_std,
            covariate_bound: None,
            covariates,
            reference_samples: default_reference(),
            radius: None,
            seed,
        }
    }

    pub fn dimension(&self) -> usize {
        self.covariates.dimension
    }

    fn resolved_x_star(&self) -> Result<DVector<f64>> {
        match &self.x_star {
            Some(v) if v.len() == self.dimension() => Ok(DVector::from_column_slice(v)),
            Some(v) => Err(Error::DimensionMismatch { expected: self.dimension(), found: v.len() }),
            None => Ok(unit_sphere_point(self.dimension(), &mut seeded_rng(derive_seed(self.seed, "x-star", 0)))),
        }
    }
}

/// `f(a^T x*) + v`. Fails when the `GlmSpec` carries no planted signal.
pub fn glm_observe<R: Rng + ?Sized>(spec: &GlmSpec, a: &DVector<f64>, rng: &mut R) -> Result<f64> {
    let x_star = spec
        .x_star
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("spec has no planted signal; use GlmInstance::observe".into()))?;
    if x_star.len() != a.len() {
        return Err(Error::DimensionMismatch { expected: x_star.len(), found: a.len() });
    }
    let z: f64 = a.iter().zip(x_star).map(|(p, q)| p * q).sum();
    Ok(observe(spec.link, z, spec.noise_std, rng))
}

fn observe<R: Rng + ?Sized>(link: Link, z: f64, noise_std: f64, rng: &mut R) -> f64 {
    let v = if noise_std > 0.0 { rng.sample::<f64, _>(StandardNormal) * noise_std } else { 0.0 };
    link.eval(z) + v
}

struct GlmOracle {
    link: Link,
    dim: usize,
    lipschitz: f64,
}

impl StochasticOracle for GlmOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &Point, sample: &Sample) -> Result<DVector<f64>> {
        let Sample::Glm { covariate, response } = sample else {
            return Err(Error::SampleMismatch { expected: "glm", found: sample.kind().name() });
        };
        if covariate.len() != self.dim || x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: covariate.len().min(x.len()) });
        }
        let residual = self.link.eval(covariate.dot(x)) - response;
        Ok(covariate * residual)
    }

    fn lipschitz_x(&self) -> f64 {
        self.lipschitz
    }
}

/// A realized GLM: planted signal, covariate process and derived constants.
#[derive(Clone, Debug)]
pub struct GlmInstance {
    pub problem: ViProblem,
    pub spec: GlmSpec,
    pub x_star: DVector<f64>,
    pub ar: Arc<ArMatrix>,
    /// Exact stationary covariance `Lambda`.
    pub covariance: DMatrix<f64>,
    /// `lambda_min(Lambda)`.
    pub kappa: f64,
    pub mu_f: f64,
    pub l_f: f64,
    pub covariate_bound: f64,
    /// True when `D_a` came from the reference draws rather than `GlmSpec::covariate_bound`.
    pub covariate_bound_estimated: bool,
    /// Half-width of the `a^T x` interval over which `mu_f` was certified.
    pub link_interval: f64,
}

impl GlmInstance {
    pub fn observe<R: Rng + ?Sized>(&self, a: &DVector<f64>, rng: &mut R) -> f64 {
        observe(self.spec.link, a.dot(&self.x_star), self.spec.noise_std, rng)
    }

    /// Markovian `(a_t, y_t)` stream; the covariates use their own seed
    /// stream, independent of the one that built `A`.
    pub fn source(&self, seed: u64) -> GlmSource {
        GlmSource {
            process: ArProcess::new(self.ar.clone(), &self.spec.covariates, derive_seed(seed, "covariates", 0)),
            noise_rng: seeded_rng(derive_seed(seed, "noise", 0)),
            link: self.spec.link,
            x_star: self.x_star.clone(),
            noise_std: self.spec.noise_std,
        }
    }

    /// `E[F~(x*, xi_{t+l}) | a_{t+l}]` with the observation noise integrated out.
    ///
    /// `F~` is affine in `y`, so the conditional mean is the oracle evaluated at
    /// the noiseless response.
    pub fn noise_averaged_oracle(&self, x: &Point, a: &DVector<f64>) -> Result<DVector<f64>> {
        let sample = Sample::Glm { covariate: a.clone(), response: self.spec.link.eval(a.dot(&self.x_star)) };
        self.problem.oracle.evaluate(x, &sample)
    }
}

/// Builds the GLM problem.
///
/// `kappa` comes from the closed-form stationary covariance of the AR
/// covariates. The sigmoid's `mu_f` is taken over `|a^T x| <= D_a R` with
/// `R` the region radius or `2 |x*|`.
pub fn glm_problem(spec: &GlmSpec) -> Result<GlmInstance> {
    spec.link.validate()?;
    if !(spec.noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise_std must be >= 0, got {}", spec.noise_std)));
    }
    let d = spec.dimension();
    let x_star = spec.resolved_x_star()?;
    let ar = Arc::new(build_ar_matrix(&spec.covariates)?);
    let covariance = ar.stationary_covariance(spec.covariates.noise_variance);
    let kappa = ar.stationary_variances(spec.covariates.noise_variance).min();
    if !(kappa > 0.0) {
        return Err(Error::DegenerateCovariance(kappa));
    }

    let mut reference_process = ArProcess::new(ar.clone(), &spec.covariates, derive_seed(spec.seed, "reference", 0));
    let reference: Vec<DVector<f64>> =
        (0..spec.reference_samples).map(|_| reference_process.stationary_covariate()).collect();
    let (covariate_bound, estimated) = match spec.covariate_bound {
        Some(b) if b > 0.0 => (b, false),
        Some(b) => return Err(Error::InvalidArgument(format!("covariate bound must be positive, got {b}"))),
        None => {
            let max_norm = reference.iter().map(|a| a.norm()).fold(0.0, f64::max);
            let fallback = if max_norm > 0.0 { max_norm } else { 2.0 * covariance.trace().sqrt() };
            log::info!("covariate bound D_a estimated as {fallback:.4} from {} stationary draws", reference.len());
            (fallback, true)
        }
    };

    let region = match spec.radius {
        Some(r) => FeasibleRegion::ball(DVector::zeros(d), r)?,
        None => FeasibleRegion::Unconstrained,
    };
    let iterate_radius = spec.radius.unwrap_or(2.0 * x_star.norm());
    let link_interval = covariate_bound * iterate_radius;
    let l_f = spec.link.lipschitz();
    let mu_f = spec.link.monotonicity_on(link_interval);

    let d_a2 = covariate_bound * covariate_bound;
    let constants = ProblemConstants {
        lipschitz: Some(l_f * d_a2),
        mu: Some(mu_f * kappa),
        sigma_sq: Some(6.0 * d_a2 * spec.noise_std * spec.noise_std),
        zeta_sq: Some(12.0 * l_f * l_f * d_a2 * d_a2),
        diameter: Some(2.0 * x_star.norm()),
    };
    let oracle = GlmOracle { link: spec.link, dim: d, lipschitz: l_f * d_a2 };

    let mean = mean_operator(spec.link, &x_star, &covariance, reference);
    let problem = ViProblem::new(Arc::new(oracle), region)
        .with_solution(x_star.clone())
        .with_constants(constants);
    let problem = match mean {
        Some(m) => problem.with_mean_operator(m),
        None => problem,
    };
    let mut resolved = spec.clone();
    resolved.x_star = Some(x_star.as_slice().to_vec());
    Ok(GlmInstance {
        problem,
        spec: resolved,
        x_star,
        ar,
        covariance,
        kappa,
        mu_f,
        l_f,
        covariate_bound,
        covariate_bound_estimated: estimated,
        link_interval,
    })
}

/// Exact `Lambda (x - x*)` for the identity link, otherwise a Monte Carlo
/// average over fixed stationary draws with the noise integrated out.
fn mean_operator(
    link: Link,
    x_star: &DVector<f64>,
    covariance: &DMatrix<f64>,
    reference: Vec<DVector<f64>>,
) -> Option<crate::vi::MeanOperator> {
    let x_star = x_star.clone();
    if link == Link::Identity {
        let cov = covariance.clone();
        return Some(Arc::new(move |x: &Point| &cov * (x - &x_star)));
    }
    if reference.is_empty() {
        return None;
    }
    let d = x_star.len();
    let a = DMatrix::from_fn(reference.len(), d, |i, j| reference[i][j]);
    let z_star = &a * &x_star;
    Some(Arc::new(move |x: &Point| {
        let z = &a * x;
        let r = DVector::from_fn(z.len(), |i, _| link.eval(z[i]) - link.eval(z_star[i]));
        a.tr_mul(&r) / z.len() as f64
    }))
}

/// Markovian GLM observations.
#[derive(Debug)]
pub struct GlmSource {
    process: ArProcess,
    noise_rng: SeededRng,
    link: Link,
    x_star: DVector<f64>,
    noise_std: f64,
}

impl GlmSource {
    fn wrap(&mut self, a: DVector<f64>) -> Sample {
        let y = observe(self.link, a.dot(&self.x_star), self.noise_std, &mut self.noise_rng);
        Sample::Glm { covariate: a, response: y }
    }
}

impl SampleSource for GlmSource {
    fn next_sample(&mut self) -> Result<Sample> {
        let a = self.process.next_covariate();
        Ok(self.wrap(a))
    }

    fn stationary_draw(&mut self) -> Result<Sample> {
        let a = self.process.stationary_covariate();
        Ok(self.wrap(a))
    }

    fn describe(&self) -> String {
        format!("GLM observations in dimension {}", self.x_star.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::collect_trajectory;

    fn small_spec(link: Link, noise: f64) -> GlmSpec {
        let mut cov = ArProcessConfig::new(5, 2, 3);
        cov.large_eigenvalue = 0.9;
        cov.burn_in = 200;
        GlmSpec::new(link, cov, noise, 7)
    }

    #[test]
    fn identity_oracle_example() {
        let spec = small_spec(Link::Identity, 0.0);
        let inst = glm_problem(&GlmSpec { covariates: ArProcessConfig::new(2, 0, 1), ..spec }).unwrap();
        let s = Sample::Glm { covariate: DVector::from_vec(vec![1.0, 0.0]), response: 0.0 };
        let g = inst.problem.oracle.evaluate(&DVector::from_vec(vec![2.0, 5.0]), &s).unwrap();
        assert_eq!(g, DVector::from_vec(vec![2.0, 0.0]));
    }

    #[test]
    fn noiseless_oracle_vanishes_at_solution() {
        let inst = glm_problem(&small_spec(Link::Sigmoid, 0.0)).unwrap();
        let samples = collect_trajectory(&mut inst.source(1), 200).unwrap();
        for s in &samples {
            assert_eq!(inst.problem.oracle.evaluate(&inst.x_star, s).unwrap().amax(), 0.0);
        }
    }

    #[test]
    fn observe_examples() {
        let mut spec = small_spec(Link::Identity, 0.0);
        spec.x_star = Some(vec![2.0, 3.0]);
        let mut rng = seeded_rng(0);
        assert_eq!(glm_observe(&spec, &DVector::from_vec(vec![1.0, 1.0]), &mut rng).unwrap(), 5.0);
        spec.link = Link::Sigmoid;
        assert_eq!(glm_observe(&spec, &DVector::from_vec(vec![0.0, 0.0]), &mut rng).unwrap(), 0.5);
        spec.noise_std = 0.1;
        let a = DVector::from_vec(vec![0.3, -0.2]);
        let ys: Vec<f64> = (0..100_000).map(|_| glm_observe(&spec, &a, &mut rng).unwrap()).collect();
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / ys.len() as f64;
        assert!((var - 0.01).abs() < 0.05 * 0.01, "{var}");
    }

    #[test]
    fn links_satisfy_their_constants() {
        let links = [Link::Sigmoid, Link::Identity, Link::CustomMonotone { mu_f: 0.5, l_f: 2.0 }];
        for link in links {
            let z_max = 4.0;
            let (mu, l) = (link.monotonicity_on(z_max), link.lipschitz());
            let grid: Vec<f64> = (0..=80).map(|i| -z_max + i as f64 * 0.1).collect();
            for &x in &grid {
                for &y in &grid {
                    if x == y {
                        continue;
                    }
                    let df = link.eval(x) - link.eval(y);
                    assert!(df * (x - y) >= mu * (x - y).powi(2) * (1.0 - 1e-9), "{link:?} {x} {y}");
                    assert!(df.abs() <= l * (x - y).abs() * (1.0 + 1e-9));
                }
            }
        }
        assert!(Link::CustomMonotone { mu_f: 2.0, l_f: 1.0 }.validate().is_err());
    }

    #[test]
    fn monte_carlo_mean_matches_large_reference() {
        let inst = glm_problem(&small_spec(Link::Sigmoid, 0.1)).unwrap();
        let x = DVector::from_vec(vec![0.5, -0.5, 0.2, 0.0, 1.0]);
        let mut big = small_spec(Link::Sigmoid, 0.1);
        big.reference_samples = 400_000;
        big.seed = 7;
        let reference = glm_problem(&big).unwrap();
        assert_eq!(reference.x_star, inst.x_star);
        let truth = reference.problem.mean(&x).unwrap();

        let mut src = inst.source(5);
        let mut errors = Vec::new();
        let mut acc = DVector::zeros(5);
        let mut count = 0usize;
        for n in [1_000usize, 16_000] {
            while count < n {
                acc += inst.problem.oracle.evaluate(&x, &src.stationary_draw().unwrap()).unwrap();
                count += 1;
            }
            errors.push((&acc / count as f64 - &truth).norm());
        }
        // 16x more samples should shrink the error roughly 4x
        assert!(errors[1] < errors[0] / 2.0, "{errors:?}");
    }

    #[test]
    fn identity_mean_is_exact_covariance_product() {
        let inst = glm_problem(&small_spec(Link::Identity, 0.3)).unwrap();
        let x = DVector::from_element(5, 1.0);
        let f = inst.problem.mean(&x).unwrap();
        assert!((f - &inst.covariance * (&x - &inst.x_star)).amax() < 1e-15);
        assert!((inst.problem.constants.mu.unwrap() - inst.kappa).abs() < 1e-15);
    }

    #[test]
    fn corollary_constants() {
        let mut spec = small_spec(Link::Sigmoid, 0.2);
        spec.covariate_bound = Some(3.0);
        let inst = glm_problem(&spec).unwrap();
        let c = inst.problem.constants;
        assert!((c.sigma_sq.unwrap() - 6.0 * 9.0 * 0.04).abs() < 1e-12);
        assert!((c.zeta_sq.unwrap() - 12.0 * 0.0625 * 81.0).abs() < 1e-12);
        assert!((c.lipschitz.unwrap() - 0.25 * 9.0).abs() < 1e-12);
    }

    #[test]
    fn noise_averaged_oracle_is_zero_at_solution() {
        let inst = glm_problem(&small_spec(Link::Sigmoid, 0.5)).unwrap();
        for s in collect_trajectory(&mut inst.source(2), 50).unwrap() {
            let Sample::Glm { covariate, .. } = s else { unreachable!() };
            assert_eq!(inst.noise_averaged_oracle(&inst.x_star, &covariate).unwrap().amax(), 0.0);
        }
    }
}
