//! Assumption certificates for the instance a config describes.

use mer_core::analysis::glm_bias_profile;
use mer_core::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::instance::{build_instance, InstanceSummary, MixingTime};
use crate::HarnessError;

#[derive(Clone, Debug, Serialize)]
pub struct CertifyOutput {
    pub experiment_id: String,
    pub replicate: usize,
    pub instance: InstanceSummary,
    pub report: CertificationReport,
    /// Spectral `tau_M`, for problems driven by a finite chain.
    pub mixing_time: Option<MixingTime>,
    /// GLM conditional bias at `x*` per lag, conditioned on Markovian covariates.
    pub glm_bias_at_solution: Option<Vec<f64>>,
    pub all_passed: bool,
}

/// Certifies replicate `replicate` of `cfg` with `samples` stationary draws.
pub fn certify_experiment(
    cfg: &ExperimentConfig,
    replicate: usize,
    samples: usize,
    tol: &Tolerances,
) -> Result<CertifyOutput, HarnessError> {
    let inst = build_instance(cfg, replicate)?;
    let seed = derive_seed(cfg.root_seed, "certify", replicate as u64);
    let draws = iid_stationary_stream(inst.source(seed).as_mut(), samples)?;
    let chain = inst.chain_model()?;
    let mut rng = seeded_rng(seed);
    let report = certify_assumptions(&inst.problem, &draws, chain.as_ref(), tol, &mut rng);
    let mixing_time = if chain.is_some() { Some(inst.spectral_mixing_time()?) } else { None };
    let glm_bias_at_solution = match inst.glm() {
        Some(glm) => {
            let mut src = inst.source(derive_seed(seed, "conditioning", 0));
            let mut conditioning = Vec::new();
            for _ in 0..4 {
                if let Sample::Glm { covariate, .. } = src.next_sample()? {
                    conditioning.push(covariate);
                }
            }
            Some(glm_bias_profile(glm, &glm.x_star, &conditioning, tol.max_lag, 64, &mut rng)?)
        }
        None => None,
    };
    let all_passed = report.all_passed() && glm_bias_at_solution.as_ref().is_none_or(|b| b.iter().all(|&v| v == 0.0));
    Ok(CertifyOutput {
        experiment_id: cfg.experiment_id.clone(),
        replicate,
        instance: inst.summary,
        report,
        mixing_time,
        glm_bias_at_solution,
        all_passed,
    })
}
