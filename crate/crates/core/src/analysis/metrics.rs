use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::vi::Point;

/// Squared-error metrics for iterates.
#[derive(Clone, Debug, PartialEq)]
pub enum ErrorMetric {
    EuclideanSq,
    /// `|x - x*|`, unsquared.
    Euclidean,
    /// `sum_s pi_s (v_s - v*_s)^2`; with `features`, `v = Psi^T x`.
    PiWeightedSq { pi: DVector<f64>, features: Option<DMatrix<f64>> },
    /// `base(x, x*) / reference`.
    NormalizedSq { base: Box<ErrorMetric>, reference: f64 },
}

impl ErrorMetric {
    pub fn pi_weighted(pi: DVector<f64>) -> Result<Self> {
        if pi.iter().any(|&p| !(p > 0.0)) || (pi.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("pi must be a positive probability vector".into()));
        }
        Ok(ErrorMetric::PiWeightedSq { pi, features: None })
    }

    /// Pi-weighted error of the value estimates `Psi^T x`.
    pub fn value_weighted(pi: DVector<f64>, features: DMatrix<f64>) -> Result<Self> {
        if features.ncols() != pi.len() {
            return Err(Error::DimensionMismatch { expected: pi.len(), found: features.ncols() });
        }
        match Self::pi_weighted(pi)? {
            ErrorMetric::PiWeightedSq { pi, .. } => Ok(ErrorMetric::PiWeightedSq { pi, features: Some(features) }),
            _ => unreachable!(),
        }
    }

    pub fn normalized(base: ErrorMetric, reference: f64) -> Result<Self> {
        if !(reference > 0.0) || !reference.is_finite() {
            return Err(Error::ZeroReference(reference));
        }
        Ok(ErrorMetric::NormalizedSq { base: Box::new(base), reference })
    }

    /// Normalizes by the error of `x0`.
    pub fn normalized_at(base: ErrorMetric, x0: &Point, x_star: &Point) -> Result<Self> {
        let reference = compute_error(&base, x0, x_star)?;
        Self::normalized(base, reference)
    }

    /// Short label written next to every error value.
    pub fn tag(&self) -> String {
        match self {
            ErrorMetric::EuclideanSq => "euclidean_sq".into(),
            ErrorMetric::Euclidean => "euclidean".into(),
            ErrorMetric::PiWeightedSq { features: None, .. } => "pi_weighted_sq".into(),
            ErrorMetric::PiWeightedSq { features: Some(_), .. } => "value_pi_weighted_sq".into(),
            ErrorMetric::NormalizedSq { base, .. } => format!("normalized_{}", base.tag()),
        }
    }
}

pub fn compute_error(metric: &ErrorMetric, x: &Point, x_star: &Point) -> Result<f64> {
    if x.len() != x_star.len() {
        return Err(Error::DimensionMismatch { expected: x_star.len(), found: x.len() });
    }
    match metric {
        ErrorMetric::EuclideanSq => Ok((x - x_star).norm_squared()),
        ErrorMetric::Euclidean => Ok((x - x_star).norm()),
        ErrorMetric::PiWeightedSq { pi, features } => {
            let diff = match features {
                Some(psi) => {
                    if psi.nrows() != x.len() {
                        return Err(Error::DimensionMismatch { expected: psi.nrows(), found: x.len() });
                    }
                    psi.tr_mul(&(x - x_star))
                }
                None => x - x_star,
            };
            if diff.len() != pi.len() {
                return Err(Error::DimensionMismatch { expected: pi.len(), found: diff.len() });
            }
            Ok(diff.iter().zip(pi.iter()).map(|(d, p)| p * d * d).sum())
        }
        ErrorMetric::NormalizedSq { base, reference } => {
            if !(*reference > 0.0) {
                return Err(Error::ZeroReference(*reference));
            }
            Ok(compute_error(base, x, x_star)? / reference)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Point {
        DVector::from_vec(xs.to_vec())
    }

    #[test]
    fn examples() {
        assert_eq!(compute_error(&ErrorMetric::EuclideanSq, &v(&[3.0, 4.0]), &v(&[0.0, 0.0])).unwrap(), 25.0);
        assert_eq!(compute_error(&ErrorMetric::Euclidean, &v(&[3.0, 4.0]), &v(&[0.0, 0.0])).unwrap(), 5.0);
        let m = ErrorMetric::pi_weighted(v(&[0.25, 0.75])).unwrap();
        assert_eq!(compute_error(&m, &v(&[2.0, 0.0]), &v(&[0.0, 0.0])).unwrap(), 1.0);
        let n = ErrorMetric::normalized(ErrorMetric::EuclideanSq, 5.0).unwrap();
        assert_eq!(compute_error(&n, &v(&[1.0, 2.0]), &v(&[0.0, 0.0])).unwrap(), 1.0);
        for metric in [ErrorMetric::EuclideanSq, m, n] {
            assert_eq!(compute_error(&metric, &v(&[0.3, -2.0]), &v(&[0.3, -2.0])).unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_reference_rejected() {
        assert_eq!(ErrorMetric::normalized(ErrorMetric::EuclideanSq, 0.0), Err(Error::ZeroReference(0.0)));
        assert!(ErrorMetric::normalized_at(ErrorMetric::EuclideanSq, &v(&[1.0]), &v(&[1.0])).is_err());
    }

    #[test]
    fn invalid_pi_rejected() {
        assert!(ErrorMetric::pi_weighted(v(&[0.5, 0.6])).is_err());
        assert!(ErrorMetric::pi_weighted(v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn value_weighted_maps_through_features() {
        let psi = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let m = ErrorMetric::value_weighted(v(&[0.5, 0.5]), psi).unwrap();
        // values (1, 2) against (0, 0)
        assert_eq!(compute_error(&m, &v(&[1.0]), &v(&[0.0])).unwrap(), 2.5);
        assert_eq!(m.tag(), "value_pi_weighted_sq");
    }
}
