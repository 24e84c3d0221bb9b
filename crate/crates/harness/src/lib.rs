//! Configuration-driven experiment runner for the `mer-core` solvers.
//!
//! A TOML config names a problem, a buffer and a list of algorithms. Each
//! replicate builds its own instance and Markovian buffer, runs every
//! algorithm on it and records error traces; the runner then writes raw
//! traces, mean and standard-error curves, planted solutions and a JSON
//! metadata sidecar.

pub mod aggregate;
pub mod certify;
pub mod compare;
pub mod config;
pub mod instance;
pub mod run;

pub use aggregate::{aggregate, read_curves, CurvePoint};
pub use certify::{certify_experiment, CertifyOutput};
pub use compare::{compare_curves, extract_curve, At, Comparison, Curve};
pub use config::{validate_config, Diagnostic, Diagnostics, ExperimentConfig};
pub use run::{run_experiment, run_replicates, RunOptions, RunSummary};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config:\n{0}")]
    Config(#[from] Diagnostics),
    #[error(transparent)]
    Core(#[from] mer_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("metric mismatch: '{a}' vs '{b}'")]
    MetricMismatch { a: String, b: String },
    #[error("empty curve: {0}")]
    EmptyCurve(String),
    #[error("several algorithms in one CSV ({0}); name one")]
    AmbiguousAlgorithm(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Reads, overrides and validates a config file.
pub fn load_config(
    path: &std::path::Path,
    seed: Option<u64>,
    replicates: Option<usize>,
    scale: Option<f64>,
) -> Result<ExperimentConfig, HarnessError> {
    let raw = std::fs::read_to_string(path)?;
    let mut cfg = validate_config(&raw)?;
    if let Some(s) = seed {
        cfg.root_seed = s;
    }
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    if let Some(f) = scale {
        cfg = cfg.scaled(f);
    }
    Ok(cfg.resolve()?)
}
