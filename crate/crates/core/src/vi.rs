//! Variational inequality problems and the projected SA step.
//!
//! A problem asks for `x*` in a closed convex region `X` with
//! `<F(x*), x - x*> >= 0` for every `x` in `X`, where `F` is only available
//! through a stochastic oracle `F~(x, xi)` whose stationary mean is `F(x)`.
//!
//! The proximal update `argmin_{x in X} eta <g, x> + |x - x_t|^2 / 2` is, for
//! the Euclidean distance, exactly the projected gradient step
//! `Proj_X(x_t - eta g)`, which is what [`sa_step`] computes.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampling::Sample;

pub type Point = DVector<f64>;

/// Exact mean operator `F`.
pub type MeanOperator = Arc<dyn Fn(&Point) -> DVector<f64> + Send + Sync>;

#[derive(Clone, Debug, PartialEq)]
pub enum FeasibleRegion {
    Unconstrained,
    Ball { center: Point, radius: f64 },
}

impl FeasibleRegion {
    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        Ok(FeasibleRegion::Ball { center, radius })
    }

    /// Euclidean projection onto the region.
    pub fn project(&self, u: &Point) -> Point {
        match self {
            FeasibleRegion::Unconstrained => u.clone(),
            FeasibleRegion::Ball { center, radius } => {
                let offset = u - center;
                let norm = offset.norm();
                // boundary points take the no-op branch
                if norm <= *radius {
                    u.clone()
                } else {
                    center + offset * (*radius / norm)
                }
            }
        }
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        match self {
            FeasibleRegion::Unconstrained => true,
            FeasibleRegion::Ball { center, radius } => (x - center).norm() <= radius + tol,
        }
    }
}

pub fn project(region: &FeasibleRegion, u: &Point) -> Point {
    region.project(u)
}

/// Sample-dependent estimator `F~(x, xi)` of the operator.
pub trait StochasticOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &Point, sample: &Sample) -> Result<DVector<f64>>;

    /// Lipschitz constant of `x -> F~(x, xi)`, uniform in `xi`.
    fn lipschitz_x(&self) -> f64;

    /// Lipschitz constant of `xi -> F~(x, xi)`, when the sample space is metric.
    fn lipschitz_sample(&self) -> Option<f64> {
        None
    }
}

/// Problem constants; any of them may be unknown.
///
/// `diameter` is the `D` of the initialization ball `B(D/2)` containing `x*`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ProblemConstants {
    pub lipschitz: Option<f64>,
    pub mu: Option<f64>,
    pub sigma_sq: Option<f64>,
    pub zeta_sq: Option<f64>,
    pub diameter: Option<f64>,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
            }
            if let Some(l) = self.lipschitz {
                if l < mu {
                    return Err(Error::InvalidArgument(format!("L = {l} is smaller than mu = {mu}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct ViProblem {
    pub oracle: Arc<dyn StochasticOracle>,
    pub mean_operator: Option<MeanOperator>,
    pub region: FeasibleRegion,
    pub solution: Option<Point>,
    pub constants: ProblemConstants,
}

impl fmt::Debug for ViProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ViProblem")
            .field("dim", &self.dim())
            .field("has_mean_operator", &self.mean_operator.is_some())
            .field("region", &self.region)
            .field("solution", &self.solution.as_ref().map(|s| s.as_slice().to_vec()))
            .field("constants", &self.constants)
            .finish()
    }
}

impl ViProblem {
    pub fn new(oracle: Arc<dyn StochasticOracle>, region: FeasibleRegion) -> Self {
        ViProblem {
            oracle,
            mean_operator: None,
            region,
            solution: None,
            constants: ProblemConstants::default(),
        }
    }

    pub fn with_mean_operator(mut self, mean: MeanOperator) -> Self {
        self.mean_operator = Some(mean);
        self
    }

    pub fn with_solution(mut self, solution: Point) -> Self {
        self.solution = Some(solution);
        self
    }

    pub fn with_constants(mut self, constants: ProblemConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn with_region(mut self, region: FeasibleRegion) -> Self {
        self.region = region;
        self
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    pub fn mean(&self, x: &Point) -> Option<DVector<f64>> {
        self.mean_operator.as_ref().map(|f| f(x))
    }
}

/// Outcome of one projected step, keeping the oracle value for diagnostics.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub next: Point,
    pub operator_value: DVector<f64>,
}

pub(crate) fn sa_step_detailed(
    problem: &ViProblem,
    x: &Point,
    sample: &Sample,
    eta: f64,
    step: u64,
) -> Result<StepOutcome> {
    let g = problem.oracle.evaluate(x, sample)?;
    if g.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: g.len() });
    }
    if !g.iter().all(|v| v.is_finite()) {
        return Err(Error::OracleFailure { step });
    }
    let next = problem.region.project(&(x - &g * eta));
    if !next.iter().all(|v| v.is_finite()) {
        return Err(Error::OracleFailure { step });
    }
    Ok(StepOutcome { next, operator_value: g })
}

/// One projected SA step: `Proj_X(x - eta * F~(x, sample))`.
pub fn sa_step(problem: &ViProblem, x: &Point, sample: &Sample, eta: f64) -> Result<Point> {
    sa_step_detailed(problem, x, sample, eta, 0).map(|s| s.next)
}

pub const DISPLACEMENT_TOL: f64 = 1e-12;

/// `|x_next - x| <= 2 eta |F~(x, xi)| + 1e-12`.
pub fn step_displacement_check(x_next: &Point, x: &Point, oracle_value: &DVector<f64>, eta: f64) -> bool {
    (x_next - x).norm() <= 2.0 * eta * oracle_value.norm() + DISPLACEMENT_TOL
}

/// Violation of the three-point inequality for a completed step at probe `z`:
///
/// `eta <g, x_next - z> + |x_next - x|^2/2 - |x - z|^2/2 + |x_next - z|^2/2`.
///
/// The prox step satisfies this with a value `<= 0` for every `z` in the region.
pub fn three_point_residual(x: &Point, x_next: &Point, g: &DVector<f64>, eta: f64, z: &Point) -> f64 {
    eta * g.dot(&(x_next - z)) + 0.5 * (x_next - x).norm_squared() - 0.5 * (x - z).norm_squared()
        + 0.5 * (x_next - z).norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Sample;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Point {
        DVector::from_row_slice(xs)
    }

    /// `F~(x, xi) = c * x`, ignoring the sample.
    struct Scaled(f64, usize);

    impl StochasticOracle for Scaled {
        fn dim(&self) -> usize {
            self.1
        }
        fn evaluate(&self, x: &Point, _: &Sample) -> Result<DVector<f64>> {
            Ok(x * self.0)
        }
        fn lipschitz_x(&self) -> f64 {
            self.0.abs()
        }
    }

    struct Broken;

    impl StochasticOracle for Broken {
        fn dim(&self) -> usize {
            1
        }
        fn evaluate(&self, _: &Point, _: &Sample) -> Result<DVector<f64>> {
            Ok(v(&[f64::NAN]))
        }
        fn lipschitz_x(&self) -> f64 {
            0.0
        }
    }

    fn unit_ball(n: usize) -> FeasibleRegion {
        FeasibleRegion::ball(DVector::zeros(n), 1.0).unwrap()
    }

    #[test]
    fn project_examples() {
        assert_eq!(project(&FeasibleRegion::Unconstrained, &v(&[3.0, -1.0])), v(&[3.0, -1.0]));
        assert_eq!(project(&unit_ball(2), &v(&[2.0, 0.0])), v(&[1.0, 0.0]));
        assert_eq!(project(&unit_ball(2), &v(&[0.3, 0.4])), v(&[0.3, 0.4]));
        // exactly on the boundary: returned untouched
        assert_eq!(project(&unit_ball(2), &v(&[0.6, 0.8])), v(&[0.6, 0.8]));
    }

    #[test]
    fn ball_rejects_negative_radius() {
        assert!(FeasibleRegion::ball(v(&[0.0]), -1.0).is_err());
        assert!(FeasibleRegion::ball(v(&[0.0]), f64::NAN).is_err());
    }

    #[test]
    fn sa_step_examples() {
        let s = Sample::Vector(v(&[0.0]));
        let zero = ViProblem::new(Arc::new(Scaled(0.0, 2)), FeasibleRegion::Unconstrained);
        assert_eq!(sa_step(&zero, &v(&[1.0, 1.0]), &s, 3.7).unwrap(), v(&[1.0, 1.0]));

        let ident = ViProblem::new(Arc::new(Scaled(1.0, 1)), FeasibleRegion::Unconstrained);
        assert_eq!(sa_step(&ident, &v(&[2.0]), &s, 0.5).unwrap(), v(&[1.0]));

        // x - eta F~ = (2, 0), projected back to (1, 0)
        let neg = ViProblem::new(Arc::new(Scaled(-1.0, 2)), unit_ball(2));
        assert_eq!(sa_step(&neg, &v(&[1.0, 0.0]), &s, 1.0).unwrap(), v(&[1.0, 0.0]));
    }

    #[test]
    fn non_finite_oracle_is_reported() {
        let p = ViProblem::new(Arc::new(Broken), FeasibleRegion::Unconstrained);
        let err = sa_step(&p, &v(&[0.0]), &Sample::State(0), 1.0).unwrap_err();
        assert!(matches!(err, Error::OracleFailure { .. }));
    }

    #[test]
    fn displacement_check_examples() {
        let x = v(&[1.0, 2.0]);
        assert!(step_displacement_check(&x, &x, &v(&[0.0, 0.0]), 0.3));
        let g = v(&[3.0, -4.0]);
        let next = &x - &g * 0.1;
        assert!(step_displacement_check(&next, &x, &g, 0.1));
        // a jump larger than 2 eta |g| is flagged
        assert!(!step_displacement_check(&(&x + v(&[10.0, 0.0])), &x, &g, 0.1));
    }

    #[test]
    fn constants_validation() {
        let ok = ProblemConstants { lipschitz: Some(2.0), mu: Some(1.0), ..Default::default() };
        assert!(ok.validate().is_ok());
        let bad = ProblemConstants { lipschitz: Some(0.5), mu: Some(1.0), ..Default::default() };
        assert!(bad.validate().is_err());
        let neg = ProblemConstants { mu: Some(-1.0), ..Default::default() };
        assert!(neg.validate().is_err());
    }

    fn vec3() -> impl Strategy<Value = Point> {
        prop::collection::vec(-10.0..10.0f64, 3).prop_map(DVector::from_vec)
    }

    proptest! {
        #[test]
        fn projection_idempotent_and_nonexpansive(u in vec3(), w in vec3(), c in vec3(), r in 0.0..5.0f64) {
            for region in [FeasibleRegion::Unconstrained, FeasibleRegion::ball(c.clone(), r).unwrap()] {
                let pu = region.project(&u);
                let pw = region.project(&w);
                prop_assert!(region.contains(&pu, 1e-12));
                prop_assert!((region.project(&pu) - &pu).norm() <= 1e-12);
                prop_assert!((&pu - &pw).norm() <= (&u - &w).norm() * (1.0 + 1e-12) + 1e-12);
            }
        }

        #[test]
        fn unconstrained_step_is_explicit_update(x in vec3(), eta in 1e-3..2.0f64, c in -3.0..3.0f64) {
            let p = ViProblem::new(Arc::new(Scaled(c, 3)), FeasibleRegion::Unconstrained);
            let next = sa_step(&p, &x, &Sample::State(0), eta).unwrap();
            prop_assert_eq!(next, &x - &x * c * eta);
        }

        #[test]
        fn three_point_holds_for_ball_steps(x in vec3(), z in vec3(), eta in 1e-3..2.0f64, c in -3.0..3.0f64) {
            let region = unit_ball(3);
            let x = region.project(&x);
            let z = region.project(&z);
            let p = ViProblem::new(Arc::new(Scaled(c, 3)), region);
            let out = sa_step_detailed(&p, &x, &Sample::State(0), eta, 0).unwrap();
            prop_assert!(three_point_residual(&x, &out.next, &out.operator_value, eta, &z) <= 1e-10);
            prop_assert!(step_displacement_check(&out.next, &x, &out.operator_value, eta));
        }
    }
}
