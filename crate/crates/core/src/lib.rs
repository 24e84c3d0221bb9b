//! Stochastic variational inequalities driven by Markovian samples.
//!
//! The crate is organised bottom-up:
//!
//! * [`vi`] holds the problem abstraction, Euclidean projections and the single
//!   projected stochastic-approximation step every solver shares.
//! * [`sampling`] generates seeded sample streams (finite Markov chains,
//!   autoregressive covariates, stationary i.i.d. draws) and stores them in a
//!   [`sampling::ReplayBuffer`].
//! * [`problems`] builds concrete instances: GLM signal recovery, linear
//!   policy evaluation and a synthetic linear operator with a closed-form root.
//! * [`solvers`] runs serial SA, skipped SA, multiscale experience replay
//!   (MER), serial skipped replay and i.i.d. SA over a buffer.
//! * [`analysis`] provides exact fixed-point oracles, error metrics and
//!   assumption certificates.
//!
//! ```
//! use mer_core::prelude::*;
//! use nalgebra::{DMatrix, DVector};
//!
//! let spec = SyntheticLinearSpec::new(DMatrix::identity(2, 2), DVector::zeros(2), 0.0);
//! let problem = synthetic_linear_problem(&spec).unwrap();
//! let x = DVector::from_vec(vec![3.0, -1.0]);
//! let next = sa_step(&problem, &x, &Sample::Vector(DVector::zeros(2)), 1.0).unwrap();
//! assert_eq!(next, DVector::zeros(2));
//! ```

pub mod analysis;
pub mod error;
pub mod problems;
pub mod rng;
pub mod sampling;
pub mod solvers;
pub mod vi;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::analysis::{
        certify_assumptions, compute_error, exact_value_function, glm_bias_profile, solve_projected_bellman,
        stationary_distribution, CertificationReport, ErrorMetric, FiniteChainModel,
        MixingCertificate, Tolerances,
    };
    pub use crate::error::{Error, Result};
    pub use crate::problems::{
        glm_observe, glm_problem, policy_eval_problem, synthetic_linear_problem, GlmInstance,
        GlmSpec, Link, MrpSpec, SyntheticLinearSpec,
    };
    pub use crate::rng::{derive_seed, seeded_rng, SeededRng};
    pub use crate::sampling::{
        ar_stream, build_ar_matrix, buffer_get, iid_stationary_stream, sticky_chain_stream,
        ArMatrix, ArProcessConfig, BufferMode, ChainInit, ReplayBuffer, Sample, SampleSource,
        StickyChainKernel,
    };
    pub use crate::solvers::{
        effective_mixing_time, run_iid_sa, run_mer, run_serial_sa, run_skipped_sa, run_sser,
        theorem_step_size, EpochSchedule, ErrorProbe, ReinitPolicy, RunSettings, RunTrace,
        StepSizePolicy, TheoremConstants,
    };
    pub use crate::vi::{
        project, sa_step, step_displacement_check, FeasibleRegion, Point, ProblemConstants,
        StochasticOracle, ViProblem,
    };
}
