use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vi::Point;

/// Epoch `k` of MER: gap `tau = B / 2^k`, `steps = 2^k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct EpochSpec {
    pub k: usize,
    pub tau: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EpochSchedule {
    pub buffer_size: usize,
    pub epochs: Vec<EpochSpec>,
}

impl EpochSchedule {
    /// Requires `B` to be a power of two and `1 <= K <= log2 B`.
    pub fn new(buffer_size: usize, num_epochs: usize) -> Result<Self> {
        if buffer_size == 0 || !buffer_size.is_power_of_two() {
            let lower = if buffer_size == 0 { 0 } else { 1usize << buffer_size.ilog2() };
            return Err(Error::InvalidSchedule(format!(
                "buffer size must be a power of two for MER; nearest lower: {lower}"
            )));
        }
        let max = buffer_size.ilog2() as usize;
        if num_epochs == 0 || num_epochs > max {
            return Err(Error::InvalidSchedule(format!("number of epochs must lie in 1..={max}, got {num_epochs}")));
        }
        let epochs = (1..=num_epochs)
            .map(|k| EpochSpec { k, tau: buffer_size >> k, steps: 1 << k })
            .collect();
        Ok(EpochSchedule { buffer_size, epochs })
    }

    /// All `log2 B` epochs, ending with gap 1.
    pub fn full(buffer_size: usize) -> Result<Self> {
        if buffer_size < 2 {
            return Err(Error::InvalidSchedule("buffer must hold at least 2 samples".into()));
        }
        Self::new(buffer_size, buffer_size.ilog2() as usize)
    }

    /// Truncates `buffer_size` down to a power of two, with a warning, and
    /// clamps the epoch count.
    pub fn truncated(buffer_size: usize, num_epochs: usize) -> Result<Self> {
        if buffer_size < 2 {
            return Err(Error::InvalidSchedule("buffer must hold at least 2 samples".into()));
        }
        let b = 1usize << buffer_size.ilog2();
        if b != buffer_size {
            log::warn!("buffer size {buffer_size} truncated to {b} for MER");
        }
        Self::new(b, num_epochs.min(b.ilog2() as usize))
    }

    pub fn num_epochs(&self) -> usize {
        self.epochs.len()
    }

    /// Buffer indices `t * tau_k`, `t = 1..T_k`.
    pub fn indices(&self, epoch: &EpochSpec) -> impl Iterator<Item = usize> {
        let tau = epoch.tau;
        (1..=epoch.steps).map(move |t| t * tau)
    }

    /// `sum_k 2^k = 2^{K+1} - 2`.
    pub fn total_steps(&self) -> usize {
        self.epochs.iter().map(|e| e.steps).sum()
    }
}

/// Inputs of the `p_k` correction. `f_star_norm` is `|F(x*)|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PInputs {
    pub m: f64,
    pub diameter: f64,
    pub sigma_sq: f64,
    pub f_star_norm: f64,
}

/// Constants of the epoch-wise step-size schedule. `lbar = L + L~_1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub mu: f64,
    pub zeta_sq: f64,
    pub lbar: f64,
    #[serde(default)]
    pub p_inputs: Option<PInputs>,
}

impl TheoremConstants {
    /// `3 mu / (16 (zeta^2 + 16 Lbar^2))`.
    pub fn stability_cap(&self) -> f64 {
        3.0 * self.mu / (16.0 * (self.zeta_sq + 16.0 * self.lbar * self.lbar))
    }

    /// `p_k`; 1 when the inputs are unknown.
    pub fn p(&self, steps: usize) -> f64 {
        let Some(p) = self.p_inputs else { return 1.0 };
        let log_t = (steps as f64).ln();
        let num = self.mu * self.mu * p.m * p.diameter.powi(2).max(1.0);
        let den = 3.0 * (6.0 * p.sigma_sq + 4.0 * p.f_star_norm.powi(2));
        1.0 + (num / den).ln() / log_t
    }
}

/// `M = max(2 + 4C/mu, 40 C_M / mu)` with `C = C_M/40 + C_B`.
pub fn m_constant(c_m: f64, c_b: f64, mu: f64) -> f64 {
    let c = c_m / 40.0 + c_b;
    (2.0 + 4.0 * c / mu).max(40.0 * c_m / mu)
}

/// `eta_k = min{3 mu / (16 (zeta^2 + 16 Lbar^2)), p_k log T_k / (mu T_k)}`.
pub fn theorem_step_size(steps: usize, c: &TheoremConstants) -> Result<f64> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("epoch length must be at least 2, got {steps}")));
    }
    if !(c.mu > 0.0) || !(c.lbar > 0.0) || !(c.zeta_sq >= 0.0) {
        return Err(Error::InvalidArgument("mu and Lbar must be positive, zeta^2 non-negative".into()));
    }
    let t = steps as f64;
    let decay = c.p(steps) * t.ln() / (c.mu * t);
    if !(decay > 0.0) {
        return Err(Error::NonPositiveStepSize(decay));
    }
    Ok(c.stability_cap().min(decay))
}

/// `tau_M = log(18 C / mu) / log(1 / rho)` with `C = C_M/40 + C_B`.
pub fn effective_mixing_time(c_m: f64, c_b: f64, mu: f64, rho: f64) -> f64 {
    let c = c_m / 40.0 + c_b;
    (18.0 * c / mu).ln() / (1.0 / rho).ln()
}

/// `alpha_k = tau_M / tau_k`.
pub fn alpha(tau_m: f64, tau_k: usize) -> f64 {
    tau_m / tau_k as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSizePolicy {
    Constant { eta: f64 },
    /// `eta_t = c / t` within each run or epoch.
    InverseT { c: f64 },
    Theorem(TheoremConstants),
}

/// Step size resolved for a run of known length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum ResolvedStep {
    Constant(f64),
    InverseT(f64),
}

impl ResolvedStep {
    pub(crate) fn at(&self, t: usize) -> f64 {
        match *self {
            ResolvedStep::Constant(eta) => eta,
            ResolvedStep::InverseT(c) => c / t as f64,
        }
    }
}

impl StepSizePolicy {
    /// Resolves the policy for a run of `horizon` steps. A theorem schedule
    /// whose decaying branch is non-positive falls back to its stability cap;
    /// the returned note records that.
    pub(crate) fn resolve(&self, horizon: usize) -> Result<(ResolvedStep, Option<String>)> {
        match self {
            StepSizePolicy::Constant { eta } if *eta > 0.0 => Ok((ResolvedStep::Constant(*eta), None)),
            StepSizePolicy::InverseT { c } if *c > 0.0 => Ok((ResolvedStep::InverseT(*c), None)),
            StepSizePolicy::Constant { eta } => Err(Error::NonPositiveStepSize(*eta)),
            StepSizePolicy::InverseT { c } => Err(Error::NonPositiveStepSize(*c)),
            StepSizePolicy::Theorem(c) => match theorem_step_size(horizon.max(2), c) {
                Ok(eta) => Ok((ResolvedStep::Constant(eta), None)),
                Err(Error::NonPositiveStepSize(v)) => {
                    let cap = c.stability_cap();
                    let note = format!("decaying step branch was {v:e} at horizon {horizon}; using the cap {cap:e}");
                    log::warn!("{note}");
                    Ok((ResolvedStep::Constant(cap), Some(note)))
                }
                Err(e) => Err(e),
            },
        }
    }
}

/// Start of each MER epoch.
#[derive(Clone, Debug, PartialEq)]
pub enum ReinitPolicy {
    FixedPoint(Point),
    /// Uniform draw from the ball.
    UniformBall { center: Point, radius: f64 },
}

impl ReinitPolicy {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            ReinitPolicy::FixedPoint(x) => x.clone(),
            ReinitPolicy::UniformBall { center, radius } => {
                let d = center.len();
                let dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let n = dir.norm();
                if n == 0.0 || d == 0 {
                    return center.clone();
                }
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                center + dir * (r / n)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn schedule_arithmetic() {
        let s = EpochSchedule::new(8, 3).unwrap();
        let idx: Vec<Vec<usize>> = s.epochs.iter().map(|e| s.indices(e).collect()).collect();
        assert_eq!(idx, vec![vec![4, 8], vec![2, 4, 6, 8], (1..=8).collect()]);
        for e in &s.epochs {
            assert_eq!(e.tau * e.steps, 8);
        }
        assert_eq!(s.total_steps(), 14);
    }

    #[test]
    fn schedule_rejects_bad_sizes() {
        let err = EpochSchedule::new(1000, 3).unwrap_err();
        assert!(err.to_string().contains("nearest lower: 512"), "{err}");
        assert!(EpochSchedule::new(8, 4).is_err());
        assert!(EpochSchedule::new(8, 0).is_err());
        let t = EpochSchedule::truncated(1000, 20).unwrap();
        assert_eq!((t.buffer_size, t.num_epochs()), (512, 9));
    }

    #[test]
    fn theorem_cap_branch() {
        let c = TheoremConstants { mu: 1.0, zeta_sq: 0.0, lbar: 1.0, p_inputs: None };
        assert_eq!(c.stability_cap(), 3.0 / 256.0);
        assert_eq!(theorem_step_size(4, &c).unwrap(), 3.0 / 256.0);
        // log(2^20)/2^20 is far below the cap
        let eta = theorem_step_size(1 << 20, &c).unwrap();
        assert!((eta - (20.0 * 2f64.ln()) / (1u64 << 20) as f64).abs() < 1e-18);
    }

    #[test]
    fn theorem_p_correction_by_hand() {
        let p = PInputs { m: 5.0, diameter: 3.0, sigma_sq: 0.5, f_star_norm: 0.0 };
        let c = TheoremConstants { mu: 0.5, zeta_sq: 0.0, lbar: 0.01, p_inputs: Some(p) };
        let t = 1024usize;
        // mu^2 M D^2 / (3 * 6 sigma^2) = 0.25 * 5 * 9 / 9 = 1.25
        let pk = 1.0 + 1.25f64.ln() / 1024f64.ln();
        let expected = (3.0f64 * 0.5 / (16.0 * 16.0 * 1e-4)).min(pk * 1024f64.ln() / (0.5 * 1024.0));
        assert!((theorem_step_size(t, &c).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_constants_fall_back() {
        let p = PInputs { m: 1e-30, diameter: 1.0, sigma_sq: 1.0, f_star_norm: 0.0 };
        let c = TheoremConstants { mu: 1.0, zeta_sq: 0.0, lbar: 1.0, p_inputs: Some(p) };
        assert!(matches!(theorem_step_size(4, &c), Err(Error::NonPositiveStepSize(_))));
        let (step, note) = StepSizePolicy::Theorem(c).resolve(4).unwrap();
        assert_eq!(step, ResolvedStep::Constant(3.0 / 256.0));
        assert!(note.is_some());
    }

    #[test]
    fn mixing_time_examples() {
        // 18 C / mu = e with C = C_B
        let tau = effective_mixing_time(0.0, std::f64::consts::E / 18.0, 1.0, (-1.0f64).exp());
        assert!((tau - 1.0).abs() < 1e-12);
        let tau = effective_mixing_time(0.0, 1.0, 1.0, 0.5);
        assert!((tau - 18f64.ln() / 2f64.ln()).abs() < 1e-12);
        assert!((tau - 4.1699).abs() < 1e-4);
        assert!(effective_mixing_time(0.0, 1.0, 1.0, 1e-300) < 0.01);
        assert_eq!(alpha(8.0, 4), 2.0);
    }

    #[test]
    fn theorem_schedule_non_increasing_once_decaying() {
        let c = TheoremConstants { mu: 1.0, zeta_sq: 0.0, lbar: 0.01, p_inputs: None };
        let etas: Vec<f64> = (1..=16).map(|k| theorem_step_size(1 << k, &c).unwrap()).collect();
        for w in etas.windows(2) {
            if w[0] < c.stability_cap() {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn uniform_ball_draws_stay_inside() {
        let p = ReinitPolicy::UniformBall { center: DVector::from_element(3, 1.0), radius: 0.5 };
        let mut rng = seeded_rng(0);
        for _ in 0..1000 {
            let x = p.draw(&mut rng);
            assert!((x - DVector::from_element(3, 1.0)).norm() <= 0.5 + 1e-12);
        }
    }
}
