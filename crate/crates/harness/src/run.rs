//! Replicate grid execution and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};

use mer_core::prelude::*;
use mer_core::solvers::RecordSchedule;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregate::{aggregate, write_curves};
use crate::config::{AlgorithmConfig, AlgorithmKind, BufferModeChoice, ExperimentConfig, NumberOrRule, RecordChoice, ReinitChoice};
use crate::instance::{algorithm_seed, build_instance, data_seed, instance_seed, Instance, InstanceSummary, MixingTime};
use crate::HarnessError;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides the config's `output_path`.
    pub out_dir: Option<PathBuf>,
    /// Worker threads; rayon's default when absent.
    pub threads: Option<usize>,
}

/// Outcome of one algorithm in one replicate.
#[derive(Clone, Debug)]
pub struct AlgorithmRun {
    pub tag: String,
    pub seed: u64,
    pub result: std::result::Result<Vec<RunTrace>, String>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ReplicateRun {
    pub replicate: usize,
    pub data_seed: u64,
    pub instance_seed: u64,
    pub summary: Option<InstanceSummary>,
    pub mixing_time: Option<MixingTime>,
    pub solution: Option<Point>,
    pub algorithms: Vec<AlgorithmRun>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub algorithm: String,
    pub replicate: usize,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub traces: PathBuf,
    pub curves: PathBuf,
    pub metadata: PathBuf,
    pub solution: PathBuf,
    pub failures: Vec<Failure>,
}

/// Runs every replicate of the grid in memory.
pub fn run_replicates(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<ReplicateRun>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| (0..cfg.replicates).into_par_iter().map(|r| run_replicate(cfg, r)).collect()))
}

/// Runs the grid and writes `<id>_traces.csv`, `<id>_curves.csv`,
/// `<id>_solution.csv` and `<id>_metadata.json`.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, HarnessError> {
    let out_dir = opts.out_dir.clone().or_else(|| cfg.output_path.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out_dir)?;
    let runs = run_replicates(cfg, opts.threads)?;
    let id = &cfg.experiment_id;
    let paths = RunSummary {
        traces: out_dir.join(format!("{id}_traces.csv")),
        curves: out_dir.join(format!("{id}_curves.csv")),
        metadata: out_dir.join(format!("{id}_metadata.json")),
        solution: out_dir.join(format!("{id}_solution.csv")),
        failures: failures(&runs),
    };
    write_traces(&paths.traces, cfg, &runs)?;
    write_curves(&paths.curves, &aggregate(cfg, &runs))?;
    write_solutions(&paths.solution, &runs)?;
    write_metadata(&paths, cfg, &runs)?;
    for f in &paths.failures {
        log::error!("{} failed in replicate {}: {}", f.algorithm, f.replicate, f.error);
    }
    Ok(paths)
}

fn failures(runs: &[ReplicateRun]) -> Vec<Failure> {
    runs.iter()
        .flat_map(|r| {
            r.algorithms.iter().filter_map(move |a| {
                a.result.as_ref().err().map(|e| Failure { algorithm: a.tag.clone(), replicate: r.replicate, error: e.clone() })
            })
        })
        .collect()
}

pub fn run_replicate(cfg: &ExperimentConfig, replicate: usize) -> ReplicateRun {
    let mut out = ReplicateRun {
        replicate,
        data_seed: data_seed(cfg.root_seed, replicate),
        instance_seed: instance_seed(cfg.root_seed, replicate),
        summary: None,
        mixing_time: None,
        solution: None,
        algorithms: Vec::new(),
    };
    let seeds = cfg.algorithms.iter().map(|a| algorithm_seed(cfg.root_seed, &a.tag, replicate));
    let inst = match build_instance(cfg, replicate) {
        Ok(inst) => inst,
        Err(e) => {
            out.algorithms = cfg
                .algorithms
                .iter()
                .zip(seeds)
                .map(|(a, seed)| AlgorithmRun { tag: a.tag.clone(), seed, result: Err(format!("instance: {e}")), notes: vec![] })
                .collect();
            return out;
        }
    };
    let needs_tau = cfg.algorithms.iter().any(|a| matches!(a.tau_m, Some(NumberOrRule::Rule(_))));
    let mixing_time = if needs_tau { Some(inst.spectral_mixing_time()) } else { None };
    let mut buffer: Option<std::result::Result<ReplayBuffer, String>> = None;
    for (alg, seed) in cfg.algorithms.iter().zip(seeds) {
        let mut notes = Vec::new();
        let result = (|| -> std::result::Result<Vec<RunTrace>, String> {
            let x0 = initial_point(cfg, &inst);
            let (step, step_notes) = inst.step_policy(&alg.step).map_err(|e| e.to_string())?;
            notes.extend(step_notes);
            let metric = inst.metric(cfg.error_metric, &x0).map_err(|e| e.to_string())?;
            let settings = RunSettings::new(alg.tag.clone(), step)
                .with_averaging(alg.averaging.unwrap_or(false))
                .with_probe(ErrorProbe::new(metric, inst.solution.clone()))
                .with_record(record_schedule(cfg.record))
                .with_seed(seed);
            let needs_buffer = !(alg.algorithm == AlgorithmKind::Iid
                || (alg.algorithm == AlgorithmKind::Mer && cfg.buffer.mode == BufferModeChoice::Dynamic));
            let shared = if needs_buffer {
                let built = buffer.get_or_insert_with(|| {
                    ReplayBuffer::fill_static(&mut inst.source(out.data_seed), cfg.buffer.size).map_err(|e| format!("buffer: {e}"))
                });
                Some(built.as_ref().map_err(Clone::clone)?)
            } else {
                None
            };
            let traces = run_algorithm(cfg, alg, &inst, shared, &settings, x0, seed, out.data_seed, mixing_time.as_ref(), &mut notes)?;
            Ok(traces)
        })();
        notes.extend(result.iter().flat_map(|ts| ts.iter().flat_map(|t| t.notes.iter().cloned())));
        out.algorithms.push(AlgorithmRun { tag: alg.tag.clone(), seed, result, notes });
    }
    out.mixing_time = mixing_time.and_then(|m| m.ok());
    out.solution = Some(inst.solution.clone());
    out.summary = Some(inst.summary);
    out
}

fn initial_point(cfg: &ExperimentConfig, inst: &Instance) -> Point {
    match &cfg.initial_point {
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(inst.solution.len()),
    }
}

fn record_schedule(choice: RecordChoice) -> RecordSchedule {
    match choice {
        RecordChoice::Every => RecordSchedule::Every,
        RecordChoice::PowersOfTwo => RecordSchedule::PowersOfTwo,
        RecordChoice::Final => RecordSchedule::Final,
        RecordChoice::Stride(n) => RecordSchedule::Stride(n),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_algorithm(
    cfg: &ExperimentConfig,
    alg: &AlgorithmConfig,
    inst: &Instance,
    buffer: Option<&ReplayBuffer>,
    settings: &RunSettings,
    x0: Point,
    seed: u64,
    data_seed: u64,
    mixing_time: Option<&mer_core::Result<MixingTime>>,
    notes: &mut Vec<String>,
) -> std::result::Result<Vec<RunTrace>, String> {
    let p = &inst.problem;
    let shared = buffer.ok_or_else(|| "internal: buffer missing".to_string());
    let result = match alg.algorithm {
        AlgorithmKind::Serial => run_serial_sa(p, shared.clone()?, x0, settings).map(|t| vec![t]),
        AlgorithmKind::Skipped => run_skipped_sa(p, shared.clone()?, alg.skip.unwrap_or(1), x0, settings).map(|t| vec![t]),
        AlgorithmKind::Mer => {
            let schedule = EpochSchedule::new(cfg.buffer.size, alg.epochs.unwrap_or(1)).map_err(|e| e.to_string())?;
            let reinit = match alg.reinit.unwrap_or(ReinitChoice::Initial) {
                ReinitChoice::Initial => ReinitPolicy::FixedPoint(x0),
                ReinitChoice::Ball => {
                    let d = p.constants.diameter.ok_or("reinit = \"ball\" needs the problem diameter")?;
                    ReinitPolicy::UniformBall { center: DVector::zeros(p.dim()), radius: d / 2.0 }
                }
            };
            let mut replay = match cfg.buffer.mode {
                BufferModeChoice::Static => ReplayBuffer::from_samples(shared.clone()?.to_vec()).map_err(|e| e.to_string())?,
                BufferModeChoice::Dynamic => {
                    ReplayBuffer::dynamic(inst.source(data_seed), cfg.buffer.size).map_err(|e| format!("buffer: {e}"))?
                }
            };
            run_mer(p, &mut replay, &schedule, &reinit, settings, &mut seeded_rng(seed))
        }
        AlgorithmKind::Sser => {
            let steps = alg.steps.unwrap_or(1);
            let beta = match &alg.beta {
                Some(NumberOrRule::Number(b)) => *b,
                _ => 1.5 * (steps as f64).ln(),
            };
            let tau_m = match &alg.tau_m {
                Some(NumberOrRule::Number(t)) => *t,
                _ => match mixing_time {
                    Some(Ok(m)) => m.tau_m,
                    Some(Err(e)) => return Err(format!("spectral mixing time: {e}")),
                    None => return Err("internal: mixing time not computed".into()),
                },
            };
            notes.push(format!("sser beta = {beta}, tau_M = {tau_m}, gap = {}", mer_core::solvers::sser_gap(beta, tau_m)));
            run_sser(p, shared.clone()?, beta, tau_m, steps, x0, settings).map(|t| vec![t])
        }
        AlgorithmKind::Iid => {
            let steps = alg.steps.unwrap_or(cfg.buffer.size);
            let mut source = inst.source(seed);
            iid_stationary_stream(source.as_mut(), steps).and_then(|stream| run_iid_sa(p, &stream, steps, x0, settings)).map(|t| vec![t])
        }
    };
    result.map_err(|e| e.to_string())
}

/// Floats with 17 significant digits, which round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn write_traces(path: &Path, cfg: &ExperimentConfig, runs: &[ReplicateRun]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["experiment_id", "algorithm", "seed", "epoch", "step", "samples_consumed", "error", "metric", "replicate", "eta"])?;
    for (a, alg) in cfg.algorithms.iter().enumerate() {
        for run in runs {
            let ar = &run.algorithms[a];
            let Ok(traces) = &ar.result else { continue };
            for trace in traces {
                for rec in &trace.records {
                    w.write_record([
                        cfg.experiment_id.clone(),
                        alg.tag.clone(),
                        ar.seed.to_string(),
                        trace.epoch.to_string(),
                        rec.step.to_string(),
                        rec.samples_consumed.to_string(),
                        rec.error.map(fmt_f64).unwrap_or_default(),
                        trace.metric.clone().unwrap_or_default(),
                        run.replicate.to_string(),
                        fmt_f64(rec.eta),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_solutions(path: &Path, runs: &[ReplicateRun]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["replicate", "index", "value"])?;
    for run in runs {
        if let Some(x) = &run.solution {
            for (i, v) in x.iter().enumerate() {
                w.write_record([run.replicate.to_string(), i.to_string(), fmt_f64(*v)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct AlgorithmMeta<'a> {
    tag: &'a str,
    seed: u64,
    status: &'static str,
    error: Option<&'a str>,
    notes: &'a [String],
}

#[derive(Serialize)]
struct ReplicateMeta<'a> {
    replicate: usize,
    data_seed: u64,
    instance_seed: u64,
    instance: Option<&'a InstanceSummary>,
    mixing_time: Option<&'a MixingTime>,
    algorithms: Vec<AlgorithmMeta<'a>>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    schema_version: u32,
    experiment_id: &'a str,
    harness_version: &'static str,
    config: &'a ExperimentConfig,
    files: [String; 3],
    replicates: Vec<ReplicateMeta<'a>>,
    failures: &'a [Failure],
    /// The only field that differs between identical runs.
    generated_at_unix: u64,
}

fn write_metadata(paths: &RunSummary, cfg: &ExperimentConfig, runs: &[ReplicateRun]) -> Result<(), HarnessError> {
    let file_name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let meta = Metadata {
        schema_version: cfg.schema_version,
        experiment_id: &cfg.experiment_id,
        harness_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        files: [file_name(&paths.traces), file_name(&paths.curves), file_name(&paths.solution)],
        replicates: runs
            .iter()
            .map(|r| ReplicateMeta {
                replicate: r.replicate,
                data_seed: r.data_seed,
                instance_seed: r.instance_seed,
                instance: r.summary.as_ref(),
                mixing_time: r.mixing_time.as_ref(),
                algorithms: r
                    .algorithms
                    .iter()
                    .map(|a| AlgorithmMeta {
                        tag: &a.tag,
                        seed: a.seed,
                        status: if a.result.is_ok() { "ok" } else { "failed" },
                        error: a.result.as_ref().err().map(String::as_str),
                        notes: &a.notes,
                    })
                    .collect(),
            })
            .collect(),
        failures: &paths.failures,
        generated_at_unix: std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    fs::write(&paths.metadata, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
