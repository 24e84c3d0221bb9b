use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn refine(a: &DMatrix<f64>, b: &DVector<f64>, x: DVector<f64>, lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> DVector<f64> {
    let residual = b - a * &x;
    match lu.solve(&residual) {
        Some(dx) => x + dx,
        None => x,
    }
}

fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = a.clone().lu();
    let x = lu.solve(b)?;
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(refine(a, b, x, &lu))
}

/// Stationary law `pi P = pi`, `sum pi = 1`, from the bordered linear system.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    if p.ncols() != n || n == 0 {
        return Err(Error::InvalidKernel("transition matrix must be square and non-empty".into()));
    }
    let mut m = (p - DMatrix::identity(n, n)).transpose();
    m.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = solve(&m, &rhs).ok_or_else(|| Error::NotErgodic("stationary system is singular".into()))?;
    let residual = (p.tr_mul(&pi) - &pi).amax();
    if residual > 1e-10 || (pi.sum() - 1.0).abs() > 1e-10 {
        return Err(Error::NotErgodic(format!("stationary residual {residual:e}")));
    }
    if pi.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotErgodic("stationary law has non-positive entries".into()));
    }
    Ok(pi)
}

/// `r(s) = sum_s' P(s, s') R(s, s')`.
pub fn expected_reward(p: &DMatrix<f64>, rewards: &DMatrix<f64>) -> Result<DVector<f64>> {
    if p.shape() != rewards.shape() {
        return Err(Error::DimensionMismatch { expected: p.nrows(), found: rewards.nrows() });
    }
    Ok(DVector::from_fn(p.nrows(), |s, _| p.row(s).dot(&rewards.row(s))))
}

/// `v* = (I - gamma P)^{-1} r`.
pub fn exact_value_function(p: &DMatrix<f64>, r: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    let n = p.nrows();
    if r.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: r.len() });
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("discount must lie in [0, 1), got {gamma}")));
    }
    let a = DMatrix::identity(n, n) - p * gamma;
    solve(&a, r).ok_or_else(|| Error::SingularSystem("I - gamma P".into()))
}

/// Root of `Psi Pi (Psi^T theta - r - gamma P Psi^T theta) = 0`; `features` is `d x |S|`.
pub fn solve_projected_bellman(
    p: &DMatrix<f64>,
    pi: &DVector<f64>,
    features: &DMatrix<f64>,
    r: &DVector<f64>,
    gamma: f64,
) -> Result<DVector<f64>> {
    let n = p.nrows();
    if features.ncols() != n || pi.len() != n || r.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: features.ncols() });
    }
    let weighted = features * DMatrix::from_diagonal(pi);
    let a = &weighted * (DMatrix::identity(n, n) - p * gamma) * features.transpose();
    let b = &weighted * r;
    let theta = solve(&a, &b).ok_or_else(|| Error::SingularSystem("projected Bellman system".into()))?;
    let residual = (&a * &theta - &b).norm();
    if residual > 1e-10 * b.norm().max(1.0) {
        return Err(Error::SingularSystem(format!("projected Bellman residual {residual:e}")));
    }
    Ok(theta)
}
