use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::mixing::{fit_geometric_rate, FiniteChainModel, MixingCertificate};
use crate::sampling::Sample;
use crate::vi::{Point, ViProblem};

/// Slack used when comparing observed quantities against declared constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    /// Relative slack for quantities computed exactly.
    pub exact_rel: f64,
    /// Relative slack for Monte Carlo estimates.
    pub sampled_rel: f64,
    /// Random probe points per check.
    pub probes: usize,
    /// Largest lag for the bias-decay profiles.
    pub max_lag: usize,
    /// Probe radius around `x*`; the problem diameter (or 1) when absent.
    pub probe_radius: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { exact_rel: 1e-6, sampled_rel: 0.05, probes: 200, max_lag: 20, probe_radius: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub observed: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn upper(observed: f64, bound: f64, slack: f64) -> Self {
        Check { observed, bound, passed: observed <= bound * (1.0 + slack) + 1e-14 }
    }
}

/// Per-lag bias values with their fitted decay.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasDecay {
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    /// `None` when every value is zero.
    pub fitted_rate: Option<f64>,
    /// Smallest constant with `value(l) <= constant * rho^l` for the certificate's `rho`.
    pub constant: f64,
    pub identically_zero: bool,
}

impl BiasDecay {
    fn from_profile(profile: Vec<f64>, rho: f64, scale: f64) -> Self {
        let lags: Vec<usize> = (0..profile.len()).collect();
        let floor = 1e-13 * scale.max(1.0);
        let identically_zero = profile.iter().all(|&v| v <= floor);
        let fit_lags: Vec<usize> = lags.iter().copied().filter(|&l| l >= 1).collect();
        let fit_values: Vec<f64> = fit_lags.iter().map(|&l| profile[l]).collect();
        let fitted_rate = if identically_zero { None } else { fit_geometric_rate(&fit_lags, &fit_values, floor) };
        let constant = if identically_zero || rho <= 0.0 {
            profile[0]
        } else {
            lags.iter().map(|&l| profile[l] / rho.powi(l as i32)).fold(0.0, f64::max)
        };
        BiasDecay { lags, values: profile, fitted_rate, constant, identically_zero }
    }
}

/// Outcome of [`certify_assumptions`]; violations are recorded, not raised.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificationReport {
    /// `|F~(x, xi) - F~(y, xi)| / |x - y|` against the oracle's `L~_1`.
    pub oracle_lipschitz: Option<Check>,
    /// `|F(x) - F(y)| / |x - y|` against the declared `L`.
    pub mean_lipschitz: Option<Check>,
    /// Smallest `<F(x), x - x*> / |x - x*|^2` against the declared `mu`.
    pub monotonicity: Option<Check>,
    /// Largest ratio of the stationary variance to `sigma^2/2 + zeta^2/2 |x - x*|^2`.
    pub variance: Option<Check>,
    pub mixing: Option<MixingCertificate>,
    pub bias_at_solution: Option<BiasDecay>,
    pub bias_of_difference: Option<BiasDecay>,
    /// `|F(x*)|`.
    pub solution_residual: Option<f64>,
    pub notes: Vec<String>,
}

impl CertificationReport {
    pub fn all_passed(&self) -> bool {
        [&self.oracle_lipschitz, &self.mean_lipschitz, &self.monotonicity, &self.variance]
            .iter()
            .all(|c| c.as_ref().is_none_or(|c| c.passed))
    }
}

fn probe<R: Rng + ?Sized>(center: &Point, radius: f64, rng: &mut R) -> Point {
    let dir = DVector::from_fn(center.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = dir.norm().max(1e-300);
    let r = radius * rng.random::<f64>().powf(1.0 / center.len().max(1) as f64);
    let x = center + dir * (r / n);
    x
}

/// Checks the declared constants of `problem` against sampled and exact
/// evidence.
///
/// `samples` should be stationary draws; they drive the Lipschitz and
/// variance checks. `chain` enables exact bias-decay profiles; the
/// certifier conditions on single states, which is the worst case for a
/// finite chain.
pub fn certify_assumptions<R: Rng + ?Sized>(
    problem: &ViProblem,
    samples: &[Sample],
    chain: Option<&FiniteChainModel>,
    tol: &Tolerances,
    rng: &mut R,
) -> CertificationReport {
    let mut notes = Vec::new();
    let d = problem.dim();
    let center = problem.solution.clone().unwrap_or_else(|| DVector::zeros(d));
    let radius = tol
        .probe_radius
        .or(problem.constants.diameter.filter(|&r| r > 0.0))
        .unwrap_or(1.0);
    let points: Vec<Point> = (0..tol.probes).map(|_| problem.region.project(&probe(&center, radius, rng))).collect();

    let oracle_lipschitz = if samples.is_empty() {
        notes.push("no samples supplied; oracle Lipschitz and variance checks skipped".into());
        None
    } else {
        let mut worst: f64 = 0.0;
        for (i, x) in points.iter().enumerate() {
            let y = &points[(i + 1) % points.len()];
            let gap = (x - y).norm();
            if gap == 0.0 {
                continue;
            }
            let s = &samples[rng.random_range(0..samples.len())];
            match (problem.oracle.evaluate(x, s), problem.oracle.evaluate(y, s)) {
                (Ok(a), Ok(b)) => worst = worst.max((a - b).norm() / gap),
                (Err(e), _) | (_, Err(e)) => {
                    notes.push(format!("oracle evaluation failed: {e}"));
                    break;
                }
            }
        }
        Some(Check::upper(worst, problem.oracle.lipschitz_x(), tol.exact_rel))
    };

    let solution_residual = match (&problem.solution, &problem.mean_operator) {
        (Some(x_star), Some(f)) => Some(f(x_star).norm()),
        _ => None,
    };

    let (mean_lipschitz, monotonicity) = match (&problem.mean_operator, &problem.solution) {
        (Some(f), Some(x_star)) => {
            let values: Vec<DVector<f64>> = points.iter().map(|x| f(x)).collect();
            let mut lip: f64 = 0.0;
            let mut mono = f64::INFINITY;
            for i in 0..points.len() {
                let j = (i + 1) % points.len();
                let gap = (&points[i] - &points[j]).norm();
                if gap > 0.0 {
                    lip = lip.max((&values[i] - &values[j]).norm() / gap);
                }
                let dx = &points[i] - x_star;
                let r2 = dx.norm_squared();
                if r2 > 0.0 {
                    mono = mono.min(values[i].dot(&dx) / r2);
                }
            }
            let lip_check = problem.constants.lipschitz.map(|l| Check::upper(lip, l, tol.sampled_rel));
            let mono_check = problem.constants.mu.map(|mu| Check {
                observed: mono,
                bound: mu,
                passed: mono >= mu * (1.0 - tol.sampled_rel) - 1e-14,
            });
            (lip_check, mono_check)
        }
        _ => {
            notes.push("mean operator or solution unavailable; Lipschitz and monotonicity of F skipped".into());
            (None, None)
        }
    };

    let variance = match (&problem.constants.sigma_sq, &problem.constants.zeta_sq, &problem.solution) {
        (Some(s2), Some(z2), Some(x_star)) if !samples.is_empty() => {
            let mut worst_ratio: f64 = 0.0;
            let mut worst_observed = 0.0;
            let mut worst_bound = 0.0;
            let count = samples.len().min(2000);
            for x in points.iter().take(20) {
                let evals: Vec<DVector<f64>> =
                    samples.iter().take(count).filter_map(|s| problem.oracle.evaluate(x, s).ok()).collect();
                if evals.is_empty() {
                    continue;
                }
                let mean = problem.mean(x).unwrap_or_else(|| {
                    evals.iter().fold(DVector::zeros(d), |a, e| a + e) / evals.len() as f64
                });
                let var = evals.iter().map(|e| (e - &mean).norm_squared()).sum::<f64>() / evals.len() as f64;
                let bound = 0.5 * s2 + 0.5 * z2 * (x - x_star).norm_squared();
                let ratio = if bound > 0.0 { var / bound } else if var > 1e-14 { f64::INFINITY } else { 0.0 };
                if ratio >= worst_ratio {
                    worst_ratio = ratio;
                    worst_observed = var;
                    worst_bound = bound;
                }
            }
            notes.push("variance check uses stationary draws rather than conditional laws".into());
            Some(Check::upper(worst_observed, worst_bound, tol.sampled_rel))
        }
        _ => None,
    };

    let (mixing, bias_at_solution, bias_of_difference) = match (chain, &problem.solution) {
        (Some(model), Some(x_star)) => match MixingCertificate::spectral(&model.transition, &model.stationary) {
            Ok(cert) => {
                let scale = model.mean(&DVector::zeros(d)).norm().max(1.0);
                let bias = BiasDecay::from_profile(model.bias_profile(x_star, tol.max_lag), cert.rho, scale);
                let diff = BiasDecay::from_profile(model.difference_bias_profile(tol.max_lag), cert.rho, 1.0);
                notes.push("bias profiles condition on single states (worst case over histories)".into());
                (Some(cert), Some(bias), Some(diff))
            }
            Err(e) => {
                notes.push(format!("mixing certificate unavailable: {e}"));
                (None, None, None)
            }
        },
        (None, _) => {
            notes.push("no finite-chain model; bias decay not certified".into());
            (None, None, None)
        }
        (Some(_), None) => (None, None, None),
    };

    CertificationReport {
        oracle_lipschitz,
        mean_lipschitz,
        monotonicity,
        variance,
        mixing,
        bias_at_solution,
        bias_of_difference,
        solution_residual,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{policy_eval_problem, synthetic_linear_problem, MrpSpec, SyntheticLinearSpec};
    use crate::rng::seeded_rng;
    use crate::sampling::{iid_stationary_stream, StickyChainKernel};
    use nalgebra::DMatrix;

    #[test]
    fn synthetic_iid_problem_certifies() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, -0.5, 1.0]);
        let spec = SyntheticLinearSpec::new(a, DVector::from_vec(vec![1.0, -1.0]), 0.3);
        let p = synthetic_linear_problem(&spec).unwrap();
        let samples = iid_stationary_stream(&mut spec.noise_source(3), 2000).unwrap();
        let r = certify_assumptions(&p, &samples, None, &Tolerances::default(), &mut seeded_rng(1));
        assert!(r.all_passed(), "{r:?}");
        assert!(r.solution_residual.unwrap() < 1e-15);
    }

    #[test]
    fn synthetic_chain_bias_decays_at_spectral_rate() {
        let k = StickyChainKernel::new(8, 0.7).unwrap();
        let spec = SyntheticLinearSpec::new(DMatrix::identity(3, 3), DVector::zeros(3), 1.0)
            .with_chain_offsets(&k.stationary(), &mut seeded_rng(2));
        let p = synthetic_linear_problem(&spec).unwrap();
        let model = FiniteChainModel::for_synthetic(&spec, k.transition_matrix(), k.stationary()).unwrap();
        let r = certify_assumptions(&p, &[], Some(&model), &Tolerances::default(), &mut seeded_rng(1));
        let bias = r.bias_at_solution.unwrap();
        let rho = k.second_eigenvalue();
        assert!((bias.fitted_rate.unwrap() - rho).abs() < 1e-8);
        // the slope does not depend on the state, so differences have no bias
        assert!(r.bias_of_difference.unwrap().identically_zero);
    }

    #[test]
    fn policy_eval_difference_bias_decays() {
        let inst = policy_eval_problem(&MrpSpec::sticky(6, 0.8, 0.5, 3).unwrap()).unwrap();
        let model = FiniteChainModel::for_policy_eval(&inst);
        let r = certify_assumptions(&inst.problem, &[], Some(&model), &Tolerances::default(), &mut seeded_rng(4));
        let rho = r.mixing.unwrap().rho;
        let diff = r.bias_of_difference.unwrap();
        assert!((diff.fitted_rate.unwrap() - rho).abs() < 0.05 * rho, "{diff:?}");
        assert!(r.monotonicity.unwrap().passed);
        assert!(r.mean_lipschitz.unwrap().passed);
    }

    #[test]
    fn half_stickiness_bias_alternates_at_one_third() {
        // m = 1/2 on 4 states: the chain never stays, second eigenvalue -1/3.
        let k = StickyChainKernel::new(4, 0.5).unwrap();
        let spec = SyntheticLinearSpec::new(DMatrix::identity(2, 2), DVector::zeros(2), 1.0)
            .with_chain_offsets(&k.stationary(), &mut seeded_rng(8));
        let model = FiniteChainModel::for_synthetic(&spec, k.transition_matrix(), k.stationary()).unwrap();
        let profile = model.bias_profile(&DVector::zeros(2), 6);
        for l in 1..6 {
            assert!((profile[l + 1] / profile[l] - 1.0 / 3.0).abs() < 1e-9);
        }
    }
}
