//! Experiment configuration: TOML schema, defaults and cross-field validation.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment_id: String,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub root_seed: u64,
    /// Directory receiving the CSV and metadata files.
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub error_metric: MetricChoice,
    #[serde(default)]
    pub record: RecordChoice,
    /// Starting point of every run and every MER epoch; the origin when absent.
    #[serde(default)]
    pub initial_point: Option<Vec<f64>>,
    pub problem: ProblemConfig,
    pub buffer: BufferConfig,
    pub algorithms: Vec<AlgorithmConfig>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricChoice {
    EuclideanSq,
    Euclidean,
    /// Squared error divided by that of the initial point.
    #[default]
    NormalizedEuclideanSq,
    /// `|Psi^T (theta - theta*)|_Pi^2`; policy evaluation only.
    ValuePi,
    NormalizedValuePi,
}

impl MetricChoice {
    pub fn needs_value_features(self) -> bool {
        matches!(self, MetricChoice::ValuePi | MetricChoice::NormalizedValuePi)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordChoice {
    Every,
    #[default]
    PowersOfTwo,
    Final,
    Stride(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    PolicyEval {
        num_states: usize,
        stickiness: f64,
        gamma: f64,
        feature_dim: usize,
        #[serde(default)]
        orthonormalize: bool,
    },
    Glm {
        dimension: usize,
        num_large: usize,
        #[serde(default)]
        link: LinkChoice,
        #[serde(default = "large_eigenvalue")]
        large_eigenvalue: f64,
        #[serde(default = "small_eig_std")]
        small_eig_std: f64,
        /// Variance of the AR innovations.
        #[serde(default = "innovation_variance")]
        covariate_noise_variance: f64,
        #[serde(default = "burn_in")]
        burn_in: usize,
        /// Standard deviation of the additive response noise.
        #[serde(default = "observation_noise_std")]
        observation_noise_std: f64,
        #[serde(default)]
        covariate_bound: Option<f64>,
        #[serde(default = "reference_samples")]
        reference_samples: usize,
        #[serde(default)]
        radius: Option<f64>,
    },
    Synthetic {
        dimension: usize,
        /// Row-major operator; the identity when absent.
        #[serde(default)]
        operator: Option<Vec<Vec<f64>>>,
        /// Planted solution; a uniform point on the unit sphere when absent.
        #[serde(default)]
        x_star: Option<Vec<f64>>,
        noise_std: f64,
        /// Drive the noise by per-state offsets of a sticky chain instead of i.i.d. Gaussians.
        #[serde(default)]
        chain: Option<ChainConfig>,
        #[serde(default)]
        radius: Option<f64>,
    },
}

fn large_eigenvalue() -> f64 {
    0.995
}
fn small_eig_std() -> f64 {
    1e-2
}
fn innovation_variance() -> f64 {
    1e-2
}
fn burn_in() -> usize {
    10_000
}
fn observation_noise_std() -> f64 {
    0.1
}
fn reference_samples() -> usize {
    2048
}

impl ProblemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemConfig::PolicyEval { .. } => "policy-eval",
            ProblemConfig::Glm { .. } => "glm",
            ProblemConfig::Synthetic { .. } => "synthetic",
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            ProblemConfig::PolicyEval { feature_dim, .. } => *feature_dim,
            ProblemConfig::Glm { dimension, .. } | ProblemConfig::Synthetic { dimension, .. } => *dimension,
        }
    }

    /// Problems whose samples come from a finite chain with a spectral certificate.
    pub fn has_finite_chain(&self) -> bool {
        matches!(self, ProblemConfig::PolicyEval { .. } | ProblemConfig::Synthetic { chain: Some(_), .. })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkChoice {
    #[default]
    Sigmoid,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub num_states: usize,
    pub stickiness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferConfig {
    pub size: usize,
    #[serde(default)]
    pub mode: BufferModeChoice,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BufferModeChoice {
    #[default]
    Static,
    Dynamic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    /// Serial SA (TD).
    Serial,
    /// Skipped SA (CTD).
    Skipped,
    Mer,
    Sser,
    /// SA on independent stationary draws.
    Iid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub tag: String,
    pub algorithm: AlgorithmKind,
    /// Report running averages; defaults to true for policy evaluation only.
    #[serde(default)]
    pub averaging: Option<bool>,
    pub step: StepConfig,
    /// Skipped SA gap.
    #[serde(default)]
    pub skip: Option<usize>,
    /// MER epoch count `K`.
    #[serde(default)]
    pub epochs: Option<usize>,
    /// MER alternative to `epochs`: the gap of the last epoch, `K = log2(B / final_gap)`.
    #[serde(default)]
    pub final_gap: Option<usize>,
    #[serde(default)]
    pub reinit: Option<ReinitChoice>,
    /// SSER `beta`.
    #[serde(default)]
    pub beta: Option<NumberOrRule>,
    /// SSER effective mixing time.
    #[serde(default)]
    pub tau_m: Option<NumberOrRule>,
    /// Step count for SSER and i.i.d. SA; i.i.d. defaults to the buffer size.
    #[serde(default)]
    pub steps: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReinitChoice {
    /// Restart every epoch from `initial_point`.
    Initial,
    /// Uniform draw from the ball of radius `D/2` around the origin.
    Ball,
}

/// A literal value or a named rule: `"log-horizon"` for `beta = 1.5 log T`,
/// `"spectral"` for `tau_M` from the spectral certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberOrRule {
    Number(f64),
    Rule(String),
}

pub const BETA_RULE: &str = "log-horizon";
pub const TAU_RULE: &str = "spectral";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepConfig {
    Constant {
        eta: f64,
    },
    InverseT {
        c: f64,
    },
    /// Epoch-wise schedule; `mu` and `zeta_sq` default to the problem's
    /// constants, `lbar` must be given. `c_m` and `c_b` enable `p_k`.
    Theorem {
        #[serde(default)]
        mu: Option<f64>,
        #[serde(default)]
        zeta_sq: Option<f64>,
        #[serde(default)]
        lbar: Option<f64>,
        #[serde(default)]
        c_m: Option<f64>,
        #[serde(default)]
        c_b: Option<f64>,
    },
}

/// One problem found while validating, located by its config path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}

struct Collector(Vec<Diagnostic>);

impl Collector {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic { path: path.into(), message: message.into() });
    }
}

/// Parses and validates raw TOML, returning the config with every default resolved.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig, Diagnostics> {
    let cfg: ExperimentConfig = toml::from_str(raw).map_err(|e| {
        let path = e.span().map_or_else(|| "config".to_string(), |s| format!("config (bytes {}..{})", s.start, s.end));
        Diagnostics(vec![Diagnostic { path, message: e.message().to_string() }])
    })?;
    cfg.resolve()
}

/// Largest power of two not above `n` (0 for 0).
pub fn lower_power_of_two(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}

impl ExperimentConfig {
    /// Scales the buffer and the explicit step counts by `factor`. A
    /// power-of-two buffer stays a power of two and explicit MER epoch counts
    /// shift with `log2 B`.
    pub fn scaled(mut self, factor: f64) -> Self {
        if factor == 1.0 || !(factor > 0.0) {
            return self;
        }
        let old = self.buffer.size;
        let mut size = ((old as f64) * factor).round().max(1.0) as usize;
        if old.is_power_of_two() {
            size = lower_power_of_two(size).max(1);
        }
        self.buffer.size = size;
        let shift = old.trailing_zeros() as i64 - size.trailing_zeros() as i64;
        for alg in &mut self.algorithms {
            if let Some(steps) = alg.steps.as_mut() {
                *steps = ((*steps as f64) * factor).round().max(1.0) as usize;
            }
            if let (Some(k), true) = (alg.epochs.as_mut(), old.is_power_of_two()) {
                *k = (*k as i64 - shift).max(1) as usize;
            }
        }
        self
    }

    /// Checks every cross-field constraint and fills in defaults.
    pub fn resolve(mut self) -> Result<Self, Diagnostics> {
        let mut c = Collector(Vec::new());
        if self.schema_version != SCHEMA_VERSION {
            c.push("schema_version", format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.experiment_id.is_empty() || !self.experiment_id.chars().all(|ch| ch.is_ascii_alphanumeric() || "-_.".contains(ch)) {
            c.push("experiment_id", "must be non-empty and use only ASCII letters, digits, '-', '_' or '.'");
        }
        if self.replicates == 0 {
            c.push("replicates", "must be at least 1");
        }
        if let RecordChoice::Stride(0) = self.record {
            c.push("record.stride", "must be at least 1");
        }
        self.check_problem(&mut c);
        let dim = self.problem.dimension();
        if let Some(x0) = &self.initial_point {
            if x0.len() != dim {
                c.push("initial_point", format!("has length {} but the problem dimension is {dim}", x0.len()));
            }
        }
        if self.error_metric.needs_value_features() && !matches!(self.problem, ProblemConfig::PolicyEval { .. }) {
            c.push("error_metric", "value-weighted metrics need a policy-evaluation problem");
        }
        let b = self.buffer.size;
        if b == 0 {
            c.push("buffer.size", "must be at least 1");
        }
        if self.algorithms.is_empty() {
            c.push("algorithms", "at least one algorithm is required");
        }
        let averaging_default = matches!(self.problem, ProblemConfig::PolicyEval { .. });
        let has_chain = self.problem.has_finite_chain();
        let mut seen = std::collections::BTreeSet::new();
        for (i, alg) in self.algorithms.iter_mut().enumerate() {
            let at = |field: &str| format!("algorithms[{i}].{field}");
            if alg.tag.is_empty() || !alg.tag.chars().all(|ch| ch.is_ascii_alphanumeric() || "-_.".contains(ch)) {
                c.push(at("tag"), "must be non-empty and use only ASCII letters, digits, '-', '_' or '.'");
            } else if !seen.insert(alg.tag.clone()) {
                c.push(at("tag"), format!("duplicate tag '{}'", alg.tag));
            }
            alg.averaging.get_or_insert(averaging_default);
            check_step(&alg.step, &at("step"), &mut c);
            let forbid = |c: &mut Collector, name: &str, present: bool| {
                if present {
                    c.push(at(name), format!("not used by algorithm '{}'", kind_name(alg.algorithm)));
                }
            };
            match alg.algorithm {
                AlgorithmKind::Serial => {
                    forbid(&mut c, "skip", alg.skip.is_some());
                    forbid(&mut c, "steps", alg.steps.is_some());
                }
                AlgorithmKind::Skipped => match alg.skip {
                    None => c.push(at("skip"), "required for skipped SA"),
                    Some(0) => c.push(at("skip"), "must be at least 1"),
                    Some(s) if s > b => c.push(at("skip"), format!("skip {s} exceeds the buffer size {b}")),
                    Some(_) => {}
                },
                AlgorithmKind::Mer => {
                    if b > 0 && !b.is_power_of_two() {
                        c.push(
                            "buffer.size",
                            format!("buffer size must be a power of two for MER; nearest lower: {}", lower_power_of_two(b)),
                        );
                    }
                    let log2b = if b > 0 { b.trailing_zeros() as usize } else { 0 };
                    match (alg.epochs, alg.final_gap) {
                        (Some(_), Some(_)) => c.push(at("final_gap"), "give either epochs or final_gap, not both"),
                        (Some(k), None) if k == 0 || k > log2b => {
                            c.push(at("epochs"), format!("must lie in 1..={log2b} (log2 of the buffer size)"))
                        }
                        (None, Some(g)) if g == 0 || !g.is_power_of_two() || g >= b.max(1) => {
                            c.push(at("final_gap"), "must be a power of two smaller than the buffer size")
                        }
                        (None, Some(g)) => {
                            alg.epochs = Some(log2b - g.trailing_zeros() as usize);
                            alg.final_gap = None;
                        }
                        (None, None) => alg.epochs = Some(log2b),
                        _ => {}
                    }
                    alg.reinit.get_or_insert(ReinitChoice::Initial);
                    forbid(&mut c, "skip", alg.skip.is_some());
                    forbid(&mut c, "steps", alg.steps.is_some());
                }
                AlgorithmKind::Sser => {
                    match &alg.beta {
                        None => c.push(at("beta"), format!("required for SSER (a number or \"{BETA_RULE}\")")),
                        Some(NumberOrRule::Number(v)) if !(*v > 0.0) => c.push(at("beta"), "must be positive"),
                        Some(NumberOrRule::Rule(r)) if r != BETA_RULE => {
                            c.push(at("beta"), format!("unknown rule '{r}' (expected \"{BETA_RULE}\")"))
                        }
                        _ => {}
                    }
                    match &alg.tau_m {
                        None => c.push(at("tau_m"), format!("required for SSER (a number or \"{TAU_RULE}\")")),
                        Some(NumberOrRule::Number(v)) if !(*v >= 0.0) => c.push(at("tau_m"), "must be non-negative"),
                        Some(NumberOrRule::Rule(r)) if r != TAU_RULE => {
                            c.push(at("tau_m"), format!("unknown rule '{r}' (expected \"{TAU_RULE}\")"))
                        }
                        Some(NumberOrRule::Rule(_)) if !has_chain => {
                            c.push(at("tau_m"), "the spectral rule needs a problem driven by a finite chain")
                        }
                        _ => {}
                    }
                    match alg.steps {
                        None | Some(0) => c.push(at("steps"), "required for SSER and must be at least 1"),
                        Some(_) => {}
                    }
                }
                AlgorithmKind::Iid => {
                    if alg.steps == Some(0) {
                        c.push(at("steps"), "must be at least 1");
                    }
                    alg.steps.get_or_insert(b);
                    forbid(&mut c, "skip", alg.skip.is_some());
                }
            }
            if alg.algorithm != AlgorithmKind::Mer {
                forbid(&mut c, "epochs", alg.epochs.is_some());
                forbid(&mut c, "final_gap", alg.final_gap.is_some());
                forbid(&mut c, "reinit", alg.reinit.is_some());
            }
            if alg.algorithm != AlgorithmKind::Sser {
                forbid(&mut c, "beta", alg.beta.is_some());
                forbid(&mut c, "tau_m", alg.tau_m.is_some());
            }
        }
        if c.0.is_empty() {
            Ok(self)
        } else {
            Err(Diagnostics(c.0))
        }
    }

    fn check_problem(&self, c: &mut Collector) {
        match &self.problem {
            ProblemConfig::PolicyEval { num_states, stickiness, gamma, feature_dim, .. } => {
                if *num_states < 2 {
                    c.push("problem.num_states", "must be at least 2");
                }
                if !(0.5..1.0).contains(stickiness) {
                    c.push("problem.stickiness", "must lie in [0.5, 1)");
                }
                if !(0.0..1.0).contains(gamma) {
                    c.push("problem.gamma", "must lie in [0, 1)");
                }
                if *feature_dim == 0 || feature_dim > num_states {
                    c.push("problem.feature_dim", format!("must lie in 1..={num_states}"));
                }
            }
            ProblemConfig::Glm { dimension, num_large, observation_noise_std, covariate_noise_variance, radius, .. } => {
                if *dimension == 0 {
                    c.push("problem.dimension", "must be at least 1");
                }
                if num_large > dimension {
                    c.push("problem.num_large", format!("must not exceed the dimension {dimension}"));
                }
                if !(*observation_noise_std >= 0.0) {
                    c.push("problem.observation_noise_std", "must be non-negative");
                }
                if !(*covariate_noise_variance > 0.0) {
                    c.push("problem.covariate_noise_variance", "must be positive");
                }
                if radius.is_some_and(|r| !(r > 0.0)) {
                    c.push("problem.radius", "must be positive");
                }
            }
            ProblemConfig::Synthetic { dimension, operator, x_star, noise_std, chain, radius } => {
                if *dimension == 0 {
                    c.push("problem.dimension", "must be at least 1");
                }
                if let Some(rows) = operator {
                    if rows.len() != *dimension || rows.iter().any(|r| r.len() != *dimension) {
                        c.push("problem.operator", format!("must be a {dimension} x {dimension} array of rows"));
                    }
                }
                if x_star.as_ref().is_some_and(|x| x.len() != *dimension) {
                    c.push("problem.x_star", format!("must have length {dimension}"));
                }
                if !(*noise_std >= 0.0) {
                    c.push("problem.noise_std", "must be non-negative");
                }
                if let Some(ch) = chain {
                    if ch.num_states < 2 {
                        c.push("problem.chain.num_states", "must be at least 2");
                    }
                    if !(0.5..1.0).contains(&ch.stickiness) {
                        c.push("problem.chain.stickiness", "must lie in [0.5, 1)");
                    }
                }
                if radius.is_some_and(|r| !(r > 0.0)) {
                    c.push("problem.radius", "must be positive");
                }
            }
        }
    }

    /// Resolved config as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn kind_name(kind: AlgorithmKind) -> &'static str {
    match kind {
        AlgorithmKind::Serial => "serial",
        AlgorithmKind::Skipped => "skipped",
        AlgorithmKind::Mer => "mer",
        AlgorithmKind::Sser => "sser",
        AlgorithmKind::Iid => "iid",
    }
}

fn check_step(step: &StepConfig, path: &str, c: &mut Collector) {
    let positive = |c: &mut Collector, name: &str, v: f64| {
        if !(v > 0.0) || !v.is_finite() {
            c.push(format!("{path}.{name}"), format!("must be positive and finite, got {v}"));
        }
    };
    match step {
        StepConfig::Constant { eta } => positive(c, "eta", *eta),
        StepConfig::InverseT { c: coef } => positive(c, "c", *coef),
        StepConfig::Theorem { mu, zeta_sq, lbar, c_m, c_b } => {
            match lbar {
                None => c.push(
                    format!("{path}.lbar"),
                    "the theorem schedule needs lbar; without it use a constant or inverse-t policy",
                ),
                Some(v) => positive(c, "lbar", *v),
            }
            if let Some(v) = mu {
                positive(c, "mu", *v);
            }
            if zeta_sq.is_some_and(|v| !(v >= 0.0)) {
                c.push(format!("{path}.zeta_sq"), "must be non-negative");
            }
            if c_m.is_some() != c_b.is_some() {
                c.push(format!("{path}.c_m"), "c_m and c_b must be given together");
            }
            for (name, v) in [("c_m", c_m), ("c_b", c_b)] {
                if v.is_some_and(|v| !(v >= 0.0)) {
                    c.push(format!("{path}.{name}"), "must be non-negative");
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        schema_version = 1
        experiment_id = "tiny"
        [problem]
        kind = "synthetic"
        dimension = 2
        noise_std = 0.1
        [buffer]
        size = 1000
        [[algorithms]]
        tag = "td"
        algorithm = "serial"
        step = { kind = "constant", eta = 0.1 }
    "#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = validate_config(MINIMAL).unwrap();
        assert_eq!(cfg.replicates, 1);
        assert_eq!(cfg.record, RecordChoice::PowersOfTwo);
        assert_eq!(cfg.algorithms[0].averaging, Some(false));
    }

    #[test]
    fn mer_requires_power_of_two() {
        let raw = MINIMAL.replace("algorithm = \"serial\"", "algorithm = \"mer\"");
        let err = validate_config(&raw).unwrap_err();
        assert!(err.0.iter().any(|d| d.path == "buffer.size"
            && d.message == "buffer size must be a power of two for MER; nearest lower: 512"));
    }

    #[test]
    fn zero_skip_is_reported() {
        let raw = MINIMAL.replace("algorithm = \"serial\"", "algorithm = \"skipped\"\nskip = 0");
        let err = validate_config(&raw).unwrap_err();
        assert_eq!(err.0, vec![Diagnostic { path: "algorithms[0].skip".into(), message: "must be at least 1".into() }]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let raw = MINIMAL.replace("replicates", "x").replace("noise_std = 0.1", "noise_std = 0.1\nnoise = 3");
        assert!(validate_config(&raw).is_err());
    }

    #[test]
    fn final_gap_resolves_to_epochs() {
        let raw = MINIMAL
            .replace("size = 1000", "size = 1024")
            .replace("algorithm = \"serial\"", "algorithm = \"mer\"\nfinal_gap = 4");
        let cfg = validate_config(&raw).unwrap();
        assert_eq!(cfg.algorithms[0].epochs, Some(8));
        assert_eq!(cfg.algorithms[0].reinit, Some(ReinitChoice::Initial));
        assert_eq!(cfg.clone().scaled(0.25).resolve().unwrap().algorithms[0].epochs, Some(6));
    }

    #[test]
    fn lower_powers() {
        assert_eq!(lower_power_of_two(1000), 512);
        assert_eq!(lower_power_of_two(1024), 1024);
        assert_eq!(lower_power_of_two(1), 1);
    }
}
