use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problems::{PolicyEvalInstance, SyntheticLinearSpec};
use crate::sampling::ArMatrix;
use crate::vi::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingMethod {
    /// Second-largest eigenvalue modulus of a finite kernel.
    SpectralGap,
    /// Spectral radius of a linear (autoregressive) recursion.
    OperatorNorm,
    /// Fitted from observed decay.
    Empirical,
}

/// Geometric mixing bound `C rho^n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MixingCertificate {
    pub rho: f64,
    pub c: f64,
    pub method: MixingMethod,
}

impl MixingCertificate {
    /// `rho` is the second-largest eigenvalue modulus of `P`; `C` is the
    /// smallest constant with `max_s TV(P^n(s, .), pi) <= C rho^n` over the
    /// lags where `rho^n` stays above round-off.
    pub fn spectral(p: &DMatrix<f64>, pi: &DVector<f64>) -> Result<Self> {
        let n = p.nrows();
        if n < 2 {
            return Err(Error::InvalidKernel("need at least 2 states".into()));
        }
        let eig = p.complex_eigenvalues();
        let unit = (0..n)
            .min_by(|&i, &j| {
                let di = (eig[i] - nalgebra::Complex::new(1.0, 0.0)).norm();
                let dj = (eig[j] - nalgebra::Complex::new(1.0, 0.0)).norm();
                di.partial_cmp(&dj).unwrap()
            })
            .unwrap();
        let rho = (0..n).filter(|&i| i != unit).map(|i| eig[i].norm()).fold(0.0, f64::max);
        if rho >= 1.0 - 1e-12 {
            return Err(Error::NotErgodic(format!("second eigenvalue modulus {rho}")));
        }
        let mut c: f64 = 0.0;
        if rho > 0.0 {
            let ones_pi = DMatrix::from_fn(n, n, |_, j| pi[j]);
            let centered = p - &ones_pi;
            let mut dev = centered.clone();
            let mut scale = rho;
            while scale > 1e-10 {
                let tv = (0..n).map(|s| 0.5 * dev.row(s).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
                c = c.max(tv / scale);
                dev = &dev * &centered;
                scale *= rho;
            }
        }
        Ok(MixingCertificate { rho, c, method: MixingMethod::SpectralGap })
    }

    pub fn autoregressive(ar: &ArMatrix) -> Self {
        MixingCertificate { rho: ar.spectral_radius(), c: 1.0, method: MixingMethod::OperatorNorm }
    }
}

/// Log-linear least-squares fit of `values[i] ~ c * rate^lags[i]`, skipping
/// entries that are zero or below `floor`.
pub fn fit_geometric_rate(lags: &[usize], values: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = lags
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > floor && v.is_finite())
        .map(|(&l, &v)| (l as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some((sxy / sxx).exp())
}

/// Finite chain whose samples have per-state affine conditional means
/// `E[F~(x, xi_t) | s_t = j] = G_j x + g_j`.
///
/// Conditioning on the history up to `t - 1` fixes the state
/// `conditioning_offset` steps before the state that opens `xi_t`: one for
/// samples that are raw states, zero for transition samples `(s_t, s_{t+1})`,
/// whose predecessor already reveals `s_t`. The bias at lag `t' - t` then uses
/// `P^(t' - t + conditioning_offset)`.
#[derive(Clone, Debug)]
pub struct FiniteChainModel {
    pub transition: DMatrix<f64>,
    pub stationary: DVector<f64>,
    pub slopes: Vec<DMatrix<f64>>,
    pub intercepts: Vec<DVector<f64>>,
    pub conditioning_offset: usize,
}

impl FiniteChainModel {
    pub fn new(
        transition: DMatrix<f64>,
        stationary: DVector<f64>,
        slopes: Vec<DMatrix<f64>>,
        intercepts: Vec<DVector<f64>>,
        conditioning_offset: usize,
    ) -> Result<Self> {
        let n = transition.nrows();
        if slopes.len() != n || intercepts.len() != n || stationary.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: slopes.len() });
        }
        Ok(FiniteChainModel { transition, stationary, slopes, intercepts, conditioning_offset })
    }

    /// TD operator: `G_j = psi_j (psi_j - gamma sum_k P(j,k) psi_k)^T`, `g_j = -r_j psi_j`.
    pub fn for_policy_eval(inst: &PolicyEvalInstance) -> Self {
        let psi = &inst.spec.features;
        let p = &inst.spec.transition;
        let n = p.nrows();
        let next_features = psi * p.transpose();
        let slopes = (0..n)
            .map(|j| {
                let col = psi.column(j);
                let direction = col - next_features.column(j) * inst.spec.gamma;
                col * direction.transpose()
            })
            .collect();
        let intercepts = (0..n).map(|j| psi.column(j) * -inst.expected_reward[j]).collect();
        FiniteChainModel {
            transition: p.clone(),
            stationary: inst.stationary().clone(),
            slopes,
            intercepts,
            conditioning_offset: 0,
        }
    }

    /// Synthetic operator driven by per-state offsets on the given chain.
    pub fn for_synthetic(spec: &SyntheticLinearSpec, transition: DMatrix<f64>, stationary: DVector<f64>) -> Result<Self> {
        let offsets = spec
            .state_offsets
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("spec has no chain offsets".into()))?;
        let n = transition.nrows();
        if offsets.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: offsets.ncols() });
        }
        let base = -(&spec.operator * &spec.x_star);
        let slopes = vec![spec.operator.clone(); n];
        let intercepts = (0..n).map(|j| &base + offsets.column(j)).collect();
        Self::new(transition, stationary, slopes, intercepts, 1)
    }

    pub fn num_states(&self) -> usize {
        self.transition.nrows()
    }

    fn state_means(&self, x: &Point) -> Vec<DVector<f64>> {
        self.slopes.iter().zip(&self.intercepts).map(|(g, c)| g * x + c).collect()
    }

    /// `F(x) = sum_j pi_j (G_j x + g_j)`.
    pub fn mean(&self, x: &Point) -> DVector<f64> {
        let means = self.state_means(x);
        means.iter().zip(self.stationary.iter()).fold(DVector::zeros(x.len()), |acc, (m, p)| acc + m * *p)
    }

    /// `P^(l + offset) - 1 pi^T` for `l = 0..=max_lag`, built as products of
    /// `P - 1 pi^T` so small deviations do not cancel against `1 pi^T`.
    fn deviation_powers(&self, max_lag: usize) -> Vec<DMatrix<f64>> {
        let n = self.num_states();
        let ones_pi = DMatrix::from_fn(n, n, |_, j| self.stationary[j]);
        let centered = &self.transition - &ones_pi;
        let mut dev = DMatrix::identity(n, n) - &ones_pi;
        for _ in 0..self.conditioning_offset {
            dev = &dev * &centered;
        }
        (0..=max_lag)
            .map(|_| {
                let current = dev.clone();
                dev = &dev * &centered;
                current
            })
            .collect()
    }

    /// `max_i |F(x) - E[F~(x, xi_{t+l}) | s = i]|` for `l = 0..=max_lag`.
    pub fn bias_profile(&self, x: &Point, max_lag: usize) -> Vec<f64> {
        let means = self.state_means(x);
        self.deviation_powers(max_lag)
            .iter()
            .map(|dev| {
                (0..self.num_states())
                    .map(|i| {
                        let b = means.iter().enumerate().fold(DVector::zeros(x.len()), |acc, (j, m)| acc + m * dev[(i, j)]);
                        b.norm()
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// Smallest `C_B(l)` with `|bias(x) - bias(y)| <= C_B(l) |x - y|` at lag `l`:
    /// the operator norm of `sum_j (P^l(i, j) - pi_j) G_j`, maximized over `i`.
    pub fn difference_bias_profile(&self, max_lag: usize) -> Vec<f64> {
        let d = self.slopes.first().map_or(0, |g| g.nrows());
        self.deviation_powers(max_lag)
            .iter()
            .map(|dev| {
                (0..self.num_states())
                    .map(|i| {
                        let m = self.slopes.iter().enumerate().fold(DMatrix::zeros(d, d), |acc, (j, g)| acc + g * dev[(i, j)]);
                        if d == 0 {
                            0.0
                        } else {
                            m.singular_values().max()
                        }
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::StickyChainKernel;

    #[test]
    fn spectral_rho_matches_sticky_formula() {
        for (n, m) in [(4, 0.5), (10, 0.9), (30, 0.95)] {
            let k = StickyChainKernel::new(n, m).unwrap();
            let cert = MixingCertificate::spectral(&k.transition_matrix(), &k.stationary()).unwrap();
            assert!((cert.rho - k.second_eigenvalue().abs()).abs() < 1e-10, "{n} {m}: {}", cert.rho);
            // P^t - 1 pi^T = rho^t (I - 1 pi^T) gives TV = rho^t (1 - 1/n)
            assert!((cert.c - (1.0 - 1.0 / n as f64)).abs() < 1e-6, "{}", cert.c);
        }
    }

    #[test]
    fn geometric_fit_recovers_rate() {
        let lags: Vec<usize> = (1..=20).collect();
        let values: Vec<f64> = lags.iter().map(|&l| 3.0 * 0.7f64.powi(l as i32)).collect();
        assert!((fit_geometric_rate(&lags, &values, 0.0).unwrap() - 0.7).abs() < 1e-12);
        assert!(fit_geometric_rate(&lags, &vec![0.0; 20], 0.0).is_none());
    }
}
