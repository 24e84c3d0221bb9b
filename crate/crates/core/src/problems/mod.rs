//! Concrete problem instances.

mod glm;
mod policy_eval;
mod synthetic;

pub use glm::{glm_observe, glm_problem, GlmInstance, GlmSource, GlmSpec, Link};
pub use policy_eval::{policy_eval_problem, MrpSource, MrpSpec, PolicyEvalInstance};
pub use synthetic::{synthetic_linear_problem, SyntheticLinearSpec, SyntheticNoiseSource};

use nalgebra::{DMatrix, DVector};

pub(crate) fn symmetric_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub(crate) fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> f64 {
    symmetric_part(a).symmetric_eigen().eigenvalues.min()
}

pub(crate) fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// Uniform point on the unit sphere.
pub fn unit_sphere_point<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    use rand_distr::StandardNormal;
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}
