//! Per-replicate problem instances built from a validated config.

use std::collections::BTreeMap;

use mer_core::analysis::{FiniteChainModel, MixingCertificate};
use mer_core::problems::{unit_sphere_point, PolicyEvalInstance};
use mer_core::sampling::{ChainInit, ChainSource, FiniteChain};
use mer_core::solvers::{effective_mixing_time, PInputs};
use mer_core::{prelude::*, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::{ExperimentConfig, LinkChoice, MetricChoice, ProblemConfig, StepConfig};

/// Seed of replicate `r`'s problem instance (GLM matrix and signal,
/// synthetic signal and offsets).
pub fn instance_seed(root: u64, replicate: usize) -> u64 {
    derive_seed(root, "instance", replicate as u64)
}

/// Seed of replicate `r`'s Markovian buffer, shared by every algorithm.
pub fn data_seed(root: u64, replicate: usize) -> u64 {
    derive_seed(root, "data", replicate as u64)
}

/// Seed of algorithm `tag` in replicate `r` (MER re-initialization, i.i.d. draws).
pub fn algorithm_seed(root: u64, tag: &str, replicate: usize) -> u64 {
    derive_seed(root, tag, replicate as u64)
}

/// Resolved constants of one instance, written to the run metadata.
#[derive(Clone, Debug, Serialize)]
pub struct InstanceSummary {
    pub kind: &'static str,
    pub dimension: usize,
    pub constants: ProblemConstants,
    pub extra: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

/// Effective mixing time from the spectral certificate and exact bias profiles.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MixingTime {
    pub rho: f64,
    pub c_m: f64,
    pub c_b: f64,
    pub tau_m: f64,
}

enum Model {
    PolicyEval(Box<PolicyEvalInstance>),
    Glm(Box<GlmInstance>),
    Synthetic { spec: SyntheticLinearSpec, chain: Option<FiniteChain> },
}

pub struct Instance {
    pub problem: ViProblem,
    pub solution: Point,
    pub summary: InstanceSummary,
    model: Model,
}

pub fn build_instance(cfg: &ExperimentConfig, replicate: usize) -> Result<Instance> {
    let seed = instance_seed(cfg.root_seed, replicate);
    let mut extra = BTreeMap::new();
    let mut notes = Vec::new();
    let (problem, solution, model) = match &cfg.problem {
        ProblemConfig::PolicyEval { num_states, stickiness, gamma, feature_dim, orthonormalize } => {
            let spec = MrpSpec::sticky(*num_states, *stickiness, *gamma, *feature_dim)?.with_orthonormal_features(*orthonormalize);
            let inst = policy_eval_problem(&spec)?;
            extra.insert("feature_bound".into(), inst.feature_bound);
            extra.insert("reward_bound".into(), inst.reward_bound);
            extra.insert("theta_bar_norm".into(), inst.theta_bar.norm());
            (inst.problem.clone(), inst.theta_bar.clone(), Model::PolicyEval(Box::new(inst)))
        }
        ProblemConfig::Glm {
            dimension,
            num_large,
            link,
            large_eigenvalue,
            small_eig_std,
            covariate_noise_variance,
            burn_in,
            observation_noise_std,
            covariate_bound,
            reference_samples,
            radius,
        } => {
            let mut covariates = ArProcessConfig::new(*dimension, *num_large, derive_seed(seed, "ar-matrix", 0));
            covariates.large_eigenvalue = *large_eigenvalue;
            covariates.small_eig_std = *small_eig_std;
            covariates.noise_variance = *covariate_noise_variance;
            covariates.burn_in = *burn_in;
            let link = match link {
                LinkChoice::Sigmoid => Link::Sigmoid,
                LinkChoice::Identity => Link::Identity,
            };
            let mut spec = GlmSpec::new(link, covariates, *observation_noise_std, seed);
            spec.covariate_bound = *covariate_bound;
            spec.reference_samples = *reference_samples;
            spec.radius = *radius;
            let inst = glm_problem(&spec)?;
            extra.insert("kappa".into(), inst.kappa);
            extra.insert("mu_f".into(), inst.mu_f);
            extra.insert("l_f".into(), inst.l_f);
            extra.insert("covariate_bound".into(), inst.covariate_bound);
            extra.insert("link_interval".into(), inst.link_interval);
            extra.insert("ar_spectral_radius".into(), inst.ar.spectral_radius());
            if inst.covariate_bound_estimated {
                notes.push(format!(
                    "covariate bound D_a = {:.6} estimated from {} stationary draws",
                    inst.covariate_bound, spec.reference_samples
                ));
            }
            (inst.problem.clone(), inst.x_star.clone(), Model::Glm(Box::new(inst)))
        }
        ProblemConfig::Synthetic { dimension, operator, x_star, noise_std, chain, radius } => {
            let d = *dimension;
            let a = match operator {
                Some(rows) => DMatrix::from_row_iterator(d, d, rows.iter().flatten().copied()),
                None => DMatrix::identity(d, d),
            };
            let x_star = match x_star {
                Some(v) => DVector::from_column_slice(v),
                None => unit_sphere_point(d, &mut seeded_rng(derive_seed(seed, "x-star", 0))),
            };
            let mut spec = SyntheticLinearSpec::new(a, x_star.clone(), *noise_std);
            if let Some(r) = radius {
                spec = spec.with_region(FeasibleRegion::ball(DVector::zeros(d), *r)?);
            }
            let chain = match chain {
                Some(ch) => {
                    let kernel = StickyChainKernel::new(ch.num_states, ch.stickiness)?;
                    spec = spec.with_chain_offsets(&kernel.stationary(), &mut seeded_rng(derive_seed(seed, "offsets", 0)));
                    extra.insert("second_eigenvalue".into(), kernel.second_eigenvalue());
                    Some(kernel.chain())
                }
                None => None,
            };
            extra.insert("noise_variance".into(), spec.noise_variance());
            let problem = synthetic_linear_problem(&spec)?;
            (problem, x_star, Model::Synthetic { spec, chain })
        }
    };
    let summary = InstanceSummary { kind: cfg.problem.kind(), dimension: solution.len(), constants: problem.constants, extra, notes };
    Ok(Instance { problem, solution, summary, model })
}

impl Instance {
    /// Markovian sample stream started from the stationary law.
    pub fn source(&self, seed: u64) -> Box<dyn SampleSource> {
        match &self.model {
            Model::PolicyEval(inst) => Box::new(inst.source(seed)),
            Model::Glm(inst) => Box::new(inst.source(seed)),
            Model::Synthetic { chain: Some(chain), .. } => Box::new(ChainSource::new(chain.clone(), ChainInit::Stationary, seed)),
            Model::Synthetic { spec, chain: None } => Box::new(spec.noise_source(seed)),
        }
    }

    /// Exact per-state conditional means, when the samples come from a finite chain.
    pub fn chain_model(&self) -> Result<Option<FiniteChainModel>> {
        match &self.model {
            Model::PolicyEval(inst) => Ok(Some(FiniteChainModel::for_policy_eval(inst))),
            Model::Synthetic { spec, chain: Some(chain) } => Ok(Some(FiniteChainModel::for_synthetic(
                spec,
                chain.transition().clone(),
                chain.stationary().clone(),
            )?)),
            _ => Ok(None),
        }
    }

    pub fn mixing(&self) -> Result<Option<MixingCertificate>> {
        match &self.model {
            Model::PolicyEval(inst) => MixingCertificate::spectral(&inst.spec.transition, inst.stationary()).map(Some),
            Model::Glm(inst) => Ok(Some(MixingCertificate::autoregressive(&inst.ar))),
            Model::Synthetic { chain: Some(chain), .. } => MixingCertificate::spectral(chain.transition(), chain.stationary()).map(Some),
            Model::Synthetic { chain: None, .. } => Ok(None),
        }
    }

    pub fn glm(&self) -> Option<&GlmInstance> {
        match &self.model {
            Model::Glm(inst) => Some(inst),
            _ => None,
        }
    }

    /// `tau_M = log(18 C / mu) / log(1 / rho)` with `C_M` and `C_B` the
    /// smallest constants dominating the exact bias profiles by `rho^l`,
    /// clamped at zero.
    pub fn spectral_mixing_time(&self) -> Result<MixingTime> {
        let model = self
            .chain_model()?
            .ok_or_else(|| Error::InvalidArgument("spectral mixing time needs a finite-chain problem".into()))?;
        let cert = self.mixing()?.ok_or_else(|| Error::InvalidArgument("no mixing certificate".into()))?;
        let rho = cert.rho;
        let mu = self.problem.constants.mu.ok_or_else(|| Error::InvalidArgument("problem has no mu".into()))?;
        let max_lag = if rho > 0.0 { ((1e-12f64).ln() / rho.ln()).ceil().clamp(1.0, 400.0) as usize } else { 1 };
        let dominate = |profile: Vec<f64>| {
            profile.iter().enumerate().map(|(l, v)| if rho > 0.0 { v / rho.powi(l as i32) } else { *v }).fold(0.0, f64::max)
        };
        let c_m = dominate(model.bias_profile(&self.solution, max_lag));
        let c_b = dominate(model.difference_bias_profile(max_lag));
        let tau_m = if rho > 0.0 { effective_mixing_time(c_m, c_b, mu, rho).max(0.0) } else { 0.0 };
        Ok(MixingTime { rho, c_m, c_b, tau_m })
    }

    pub fn metric(&self, choice: MetricChoice, x0: &Point) -> Result<ErrorMetric> {
        let base = match choice {
            MetricChoice::EuclideanSq | MetricChoice::NormalizedEuclideanSq => ErrorMetric::EuclideanSq,
            MetricChoice::Euclidean => ErrorMetric::Euclidean,
            MetricChoice::ValuePi | MetricChoice::NormalizedValuePi => match &self.model {
                Model::PolicyEval(inst) => ErrorMetric::value_weighted(inst.stationary().clone(), inst.spec.features.clone())?,
                _ => return Err(Error::InvalidArgument("value-weighted metrics need a policy-evaluation problem".into())),
            },
        };
        match choice {
            MetricChoice::NormalizedEuclideanSq | MetricChoice::NormalizedValuePi => {
                ErrorMetric::normalized_at(base, x0, &self.solution)
            }
            _ => Ok(base),
        }
    }

    /// Resolves a step configuration, filling theorem constants from the
    /// problem. Returns notes on every fallback taken.
    pub fn step_policy(&self, step: &StepConfig) -> Result<(StepSizePolicy, Vec<String>)> {
        let mut notes = Vec::new();
        let policy = match step {
            StepConfig::Constant { eta } => StepSizePolicy::Constant { eta: *eta },
            StepConfig::InverseT { c } => StepSizePolicy::InverseT { c: *c },
            StepConfig::Theorem { mu, zeta_sq, lbar, c_m, c_b } => {
                let k = &self.problem.constants;
                let mu = mu.or(k.mu).ok_or_else(|| Error::InvalidArgument("theorem step size needs mu".into()))?;
                let zeta_sq = zeta_sq.or(k.zeta_sq).ok_or_else(|| Error::InvalidArgument("theorem step size needs zeta^2".into()))?;
                let lbar = lbar.ok_or_else(|| Error::InvalidArgument("theorem step size needs lbar".into()))?;
                let p_inputs = match (c_m, c_b, k.diameter, k.sigma_sq) {
                    (Some(c_m), Some(c_b), Some(diameter), Some(sigma_sq)) => {
                        let f_star_norm = self.problem.mean(&self.solution).map_or(0.0, |f| f.norm());
                        Some(PInputs { m: mer_core::solvers::m_constant(*c_m, *c_b, mu), diameter, sigma_sq, f_star_norm })
                    }
                    _ => {
                        notes.push("p_k inputs incomplete; using p_k = 1".to_string());
                        None
                    }
                };
                StepSizePolicy::Theorem(TheoremConstants { mu, zeta_sq, lbar, p_inputs })
            }
        };
        Ok((policy, notes))
    }
}
