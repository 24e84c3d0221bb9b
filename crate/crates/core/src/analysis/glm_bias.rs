use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::problems::GlmInstance;
use crate::vi::Point;

/// Conditional bias of the GLM oracle, `max_i |E[F~(x, xi_{t+l}) | a_{t-1} = c_i] - F(x)|`
/// for `l = 0..=max_lag`, over the conditioning covariates `c_i`.
///
/// The covariate path is simulated forward `l + 1` steps from each `c_i`
/// with `draws` independent paths; the response noise is integrated out
/// exactly. At `x*` every summand is `a (f(a^T x*) - f(a^T x*)) = 0`, so the
/// profile there is exactly zero whatever the draws.
pub fn glm_bias_profile<R: Rng + ?Sized>(
    inst: &GlmInstance,
    x: &Point,
    conditioning: &[DVector<f64>],
    max_lag: usize,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if draws == 0 || conditioning.is_empty() {
        return Err(Error::InvalidArgument("need at least one conditioning covariate and one draw".into()));
    }
    let mean = inst.problem.mean(x).ok_or_else(|| Error::InvalidArgument("GLM instance has no mean operator".into()))?;
    let a_mat = &inst.ar.matrix;
    let std = inst.spec.covariates.noise_variance.sqrt();
    let d = x.len();
    let mut profile = vec![0.0f64; max_lag + 1];
    for c in conditioning {
        if c.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: c.len() });
        }
        let mut sums = vec![DVector::zeros(d); max_lag + 1];
        for _ in 0..draws {
            let mut a = c.clone();
            for sum in sums.iter_mut() {
                a = a_mat * &a + DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal) * std);
                *sum += inst.noise_averaged_oracle(x, &a)?;
            }
        }
        for (p, sum) in profile.iter_mut().zip(&sums) {
            *p = p.max((sum / draws as f64 - &mean).norm());
        }
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{glm_problem, GlmSpec, Link};
    use crate::rng::seeded_rng;
    use crate::sampling::ArProcessConfig;

    #[test]
    fn bias_vanishes_at_solution_and_not_elsewhere() {
        let spec = GlmSpec::new(Link::Sigmoid, ArProcessConfig::new(6, 2, 4), 0.1, 4);
        let inst = glm_problem(&spec).unwrap();
        let mut src = inst.source(1);
        let cond: Vec<DVector<f64>> = (0..3)
            .map(|_| match crate::sampling::SampleSource::next_sample(&mut src).unwrap() {
                crate::sampling::Sample::Glm { covariate, .. } => covariate * 20.0,
                _ => unreachable!(),
            })
            .collect();
        let mut rng = seeded_rng(0);
        let at_star = glm_bias_profile(&inst, &inst.x_star, &cond, 10, 50, &mut rng).unwrap();
        assert!(at_star.iter().all(|&v| v == 0.0));
        let away = &inst.x_star * 3.0;
        let profile = glm_bias_profile(&inst, &away, &cond, 10, 50, &mut rng).unwrap();
        assert!(profile[0] > 0.0);
    }
}
