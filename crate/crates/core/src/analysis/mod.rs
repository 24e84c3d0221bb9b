//! Exact fixed-point oracles, error metrics and assumption certificates.

mod bellman;
mod certify;
mod glm_bias;
mod metrics;
mod mixing;

pub use bellman::{exact_value_function, expected_reward, solve_projected_bellman, stationary_distribution};
pub use certify::{certify_assumptions, BiasDecay, CertificationReport, Check, Tolerances};
pub use glm_bias::glm_bias_profile;
pub use metrics::{compute_error, ErrorMetric};
pub use mixing::{fit_geometric_rate, FiniteChainModel, MixingCertificate, MixingMethod};
