use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mer_harness::aggregate::mean_stderr;
use mer_harness::{
    compare_curves, extract_curve, load_config, read_curves, run_experiment, validate_config, At, ExperimentConfig,
    HarnessError, RunOptions,
};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn resolved(raw: &str) -> ExperimentConfig {
    validate_config(raw).unwrap().resolve().unwrap()
}

const SERIAL_TEN: &str = r#"
schema_version = 1
experiment_id = "ten"
replicates = 1
root_seed = 3
error_metric = "euclidean-sq"
record = "every"

[problem]
kind = "synthetic"
dimension = 2
noise_std = 0.5

[buffer]
size = 10

[[algorithms]]
tag = "td"
algorithm = "serial"
step = { kind = "constant", eta = 0.1 }
"#;

const GRID: &str = r#"
schema_version = 1
experiment_id = "grid"
replicates = 4
root_seed = 17
error_metric = "normalized-value-pi"

[problem]
kind = "policy-eval"
num_states = 6
stickiness = 0.8
gamma = 0.8
feature_dim = 3

[buffer]
size = 256

[[algorithms]]
tag = "td"
algorithm = "serial"
step = { kind = "constant", eta = 0.2 }

[[algorithms]]
tag = "mer"
algorithm = "mer"
final_gap = 2
step = { kind = "constant", eta = 0.2 }
"#;

fn run_to(cfg: &ExperimentConfig, dir: &Path, threads: Option<usize>) -> mer_harness::RunSummary {
    run_experiment(cfg, &RunOptions { out_dir: Some(dir.to_path_buf()), threads }).unwrap()
}

#[test]
fn ten_step_serial_run_writes_ten_trace_rows() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_to(&resolved(SERIAL_TEN), dir.path(), None);
    let mut reader = csv::Reader::from_path(&summary.traces).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        &header[..8],
        ["experiment_id", "algorithm", "seed", "epoch", "step", "samples_consumed", "error", "metric"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().map(|r| r[4].parse::<usize>().unwrap()).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
    // 17 significant digits round-trip exactly.
    let e: f64 = rows[0][6].parse().unwrap();
    assert_eq!(format!("{e:.16e}"), rows[0][6]);
}

#[test]
fn non_power_of_two_mer_buffer_is_diagnosed() {
    let raw = GRID.replace("size = 256", "size = 1000");
    let diags = validate_config(&raw).and_then(|c| c.resolve()).unwrap_err();
    let hit = diags.0.iter().find(|d| d.path == "buffer.size").expect("buffer diagnostic");
    assert_eq!(hit.message, "buffer size must be a power of two for MER; nearest lower: 512");
}

#[test]
fn zero_skip_is_diagnosed() {
    let raw = SERIAL_TEN.replace("algorithm = \"serial\"", "algorithm = \"skipped\"\nskip = 0");
    let diags = validate_config(&raw).and_then(|c| c.resolve()).unwrap_err();
    assert!(diags.0.iter().any(|d| d.path == "algorithms[0].skip"), "{diags}");
}

#[test]
fn resolved_config_round_trips() {
    let cfg = load_config(&config_path("pe_m090.toml"), None, None, None).unwrap();
    let echoed = cfg.to_toml();
    assert_eq!(resolved(&echoed), cfg);
    // Every default is spelled out in the echo.
    for key in ["averaging = true", "epochs = 13", "reinit = \"initial\"", "steps = 16384", "orthonormalize = false"] {
        assert!(echoed.contains(key), "missing {key} in\n{echoed}");
    }
}

#[test]
fn shipped_configs_validate() {
    for name in ["pe_m090.toml", "pe_m095.toml", "glm_dl20.toml", "glm_dl25.toml", "synthetic_sser.toml"] {
        load_config(&config_path(name), None, None, None).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

fn artifacts(summary: &mer_harness::RunSummary) -> Vec<Vec<u8>> {
    [&summary.traces, &summary.curves, &summary.solution].iter().map(|p| fs::read(p).unwrap()).collect()
}

fn metadata_without_timestamp(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("generated_at_unix").expect("timestamp field");
    v
}

#[test]
fn reruns_and_thread_counts_reproduce_bytes() {
    let cfg = resolved(GRID);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_to(&cfg, a.path(), Some(1));
    let second = run_to(&cfg, b.path(), Some(4));
    assert_eq!(artifacts(&first), artifacts(&second));
    assert_eq!(metadata_without_timestamp(&first.metadata), metadata_without_timestamp(&second.metadata));
}

#[test]
fn aggregated_means_recompute_from_raw_rows() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_to(&resolved(GRID), dir.path(), None);
    let mut groups: BTreeMap<(String, usize, usize), Vec<f64>> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(&summary.traces).unwrap();
    for row in reader.records() {
        let row = row.unwrap();
        let key = (row[1].to_string(), row[3].parse().unwrap(), row[4].parse().unwrap());
        groups.entry(key).or_default().push(row[6].parse().unwrap());
    }
    let curves = read_curves(&summary.curves).unwrap();
    assert_eq!(curves.len(), groups.len());
    for p in &curves {
        let values = &groups[&(p.algorithm.clone(), p.epoch, p.step)];
        assert_eq!(values.len(), p.replicates);
        let (mean, stderr) = mean_stderr(values);
        assert_eq!(format!("{mean:.16e}"), format!("{:.16e}", p.mean));
        assert_eq!(format!("{stderr:.16e}"), format!("{:.16e}", p.stderr));
    }
    // Replicate count is constant along each curve.
    assert!(curves.iter().all(|p| p.replicates == 4));
}

#[test]
fn adding_an_algorithm_leaves_existing_streams_alone() {
    let base = resolved(GRID);
    let extended = resolved(&format!(
        "{GRID}\n[[algorithms]]\ntag = \"ctd\"\nalgorithm = \"skipped\"\nskip = 4\nstep = {{ kind = \"constant\", eta = 0.2 }}\n"
    ));
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let keep = |path: &Path| -> Vec<String> {
        fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with("grid,ctd,")).map(String::from).collect()
    };
    let first = run_to(&base, a.path(), None);
    let second = run_to(&extended, b.path(), None);
    assert_eq!(keep(&first.traces), keep(&second.traces));
    assert_eq!(keep(&first.curves), keep(&second.curves));
}

#[test]
fn curve_against_itself_and_metric_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let grid = read_curves(&run_to(&resolved(GRID), dir.path(), None).curves).unwrap();
    let ten = read_curves(&run_to(&resolved(SERIAL_TEN), dir.path(), None).curves).unwrap();
    let td = extract_curve(&grid, Some("td")).unwrap();
    let cmp = compare_curves(&td, &td, At::FinalSample).unwrap();
    assert_eq!(cmp.difference, 0.0);
    assert!(!cmp.significant);
    assert!(matches!(extract_curve(&grid, None), Err(HarnessError::AmbiguousAlgorithm(_))));
    let other = extract_curve(&ten, None).unwrap();
    assert!(matches!(compare_curves(&td, &other, At::FinalSample), Err(HarnessError::MetricMismatch { .. })));
}

#[test]
fn failing_algorithm_is_recorded_and_others_flushed() {
    // eta = 3 on the identity operator doubles the error every step until it overflows.
    let raw = SERIAL_TEN.replace("size = 10", "size = 2048")
        + "\n[[algorithms]]\ntag = \"blowup\"\nalgorithm = \"serial\"\nstep = { kind = \"constant\", eta = 3.0 }\n";
    let dir = tempfile::tempdir().unwrap();
    let summary = run_to(&resolved(&raw), dir.path(), None);
    assert_eq!(summary.failures.len(), 1);
    assert_eq!(summary.failures[0].algorithm, "blowup");
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(&summary.metadata).unwrap()).unwrap();
    assert_eq!(meta["failures"][0]["algorithm"], "blowup");
    let curves = read_curves(&summary.curves).unwrap();
    assert!(curves.iter().any(|p| p.algorithm == "td"));
    assert!(curves.iter().all(|p| p.algorithm != "blowup"));
}

#[test]
fn td_against_mer_on_slow_policy_evaluation() {
    let cfg = load_config(&config_path("pe_m095.toml"), None, None, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let points = read_curves(&run_to(&cfg, dir.path(), None).curves).unwrap();
    let td = extract_curve(&points, Some("td")).unwrap();
    let mer = extract_curve(&points, Some("mer")).unwrap();
    let cmp = compare_curves(&td, &mer, At::FinalSample).unwrap();
    assert!(cmp.significant && cmp.difference > 0.0, "{cmp:?}");
}

fn mer() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mer"));
    cmd.env_remove("MER_OUT_DIR").env_remove("MER_THREADS");
    cmd
}

#[test]
fn cli_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("grid.toml");
    fs::write(&config, GRID).unwrap();

    let out = mer().arg("validate").arg(&config).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("epochs = 7"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, GRID.replace("size = 256", "size = 1000")).unwrap();
    let out = mer().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("nearest lower: 512"));

    let out = mer()
        .args(["run", "--replicates", "2", "--seed", "5", "--threads", "2"])
        .arg(&config)
        .env("MER_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curves = dir.path().join("grid_curves.csv");
    assert!(read_curves(&curves).unwrap().iter().all(|p| p.replicates == 2));

    let out = mer()
        .arg("compare")
        .arg(&curves)
        .arg(&curves)
        .args(["--a-algorithm", "td", "--b-algorithm", "mer", "--at", "64"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["sample_count"], 64);

    let out = mer().arg("certify").arg(&config).args(["--samples", "200"]).output().unwrap();
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["experiment_id"], "grid");
    assert!(report["mixing_time"]["rho"].as_f64().unwrap() > 0.0);
}

#[test]
fn cli_exits_with_two_when_a_run_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("blowup.toml");
    let raw = SERIAL_TEN.replace("size = 10", "size = 2048").replace("eta = 0.1", "eta = 3.0");
    fs::write(&config, raw).unwrap();
    let out = mer().arg("run").arg(&config).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("ten_metadata.json").exists());
}
