use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mer_core::analysis::Tolerances;
use mer_harness::{
    certify_experiment, compare_curves, extract_curve, load_config, read_curves, run_experiment, At, HarnessError,
    RunOptions,
};

#[derive(Parser)]
#[command(name = "mer", version, about = "Run, validate and compare MER benchmark experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Root seed replacing the config's `root_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Replicate count replacing the config's `replicates`.
    #[arg(long)]
    replicates: Option<usize>,
    /// Scale the buffer size and explicit step counts.
    #[arg(long, value_parser = positive_f64)]
    scale: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replicate and write traces, curves, solutions and metadata.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, env = "MER_OUT_DIR")]
        out_dir: Option<PathBuf>,
        #[arg(long, env = "MER_THREADS")]
        threads: Option<usize>,
    },
    /// Check a config and print it with every default resolved.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compare two aggregated curves at a sample count.
    Compare {
        csv_a: PathBuf,
        csv_b: PathBuf,
        /// Algorithm tag in the first CSV; optional when it holds one algorithm.
        #[arg(long)]
        a_algorithm: Option<String>,
        #[arg(long)]
        b_algorithm: Option<String>,
        /// `final` for the last sample count both curves reach, or a sample count.
        #[arg(long, default_value = "final", value_parser = parse_at)]
        at: At,
    },
    /// Check the declared problem constants and print the report as JSON.
    Certify {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        /// Stationary draws used by the sampled checks.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        max_lag: usize,
    },
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got '{s}'")),
    }
}

fn parse_at(s: &str) -> Result<At, String> {
    if s == "final" {
        return Ok(At::FinalSample);
    }
    s.parse::<usize>().map(At::SampleCount).map_err(|_| format!("expected 'final' or a sample count, got '{s}'"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run { config, overrides, out_dir, threads } => {
            let cfg = load_config(&config, overrides.seed, overrides.replicates, overrides.scale)?;
            let summary = run_experiment(&cfg, &RunOptions { out_dir, threads })?;
            for path in [&summary.traces, &summary.curves, &summary.solution, &summary.metadata] {
                println!("{}", path.display());
            }
            if summary.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("{} algorithm runs failed; see the metadata file", summary.failures.len());
                Ok(ExitCode::from(2))
            }
        }
        Command::Validate { config, overrides } => {
            let cfg = load_config(&config, overrides.seed, overrides.replicates, overrides.scale)?;
            print!("{}", cfg.to_toml());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { csv_a, csv_b, a_algorithm, b_algorithm, at } => {
            let a = extract_curve(&read_curves(&csv_a)?, a_algorithm.as_deref())?;
            let b = extract_curve(&read_curves(&csv_b)?, b_algorithm.as_deref())?;
            let cmp = compare_curves(&a, &b, at)?;
            println!("{}", serde_json::to_string_pretty(&cmp)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify { config, overrides, replicate, samples, max_lag } => {
            let cfg = load_config(&config, overrides.seed, overrides.replicates, overrides.scale)?;
            let tol = Tolerances { max_lag, ..Tolerances::default() };
            let out = certify_experiment(&cfg, replicate, samples, &tol)?;
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(if out.all_passed { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
    }
}
