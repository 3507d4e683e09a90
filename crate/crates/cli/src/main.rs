use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use capplan::experiment::{default_grids, run, sweep, Approach, RunError, RunSpec};
use capplan::io::{load_problem, problem_to_string, LoadError};
use capplan::synthgen::{generate, GenConfig};
use capplan::{EstimatorKind, Problem, Strategy};
use clap::Parser;

const EXIT_VALIDATION: u8 = 2;
const EXIT_INTERNAL: u8 = 4;

/// Schedule jobs with uncertain durations and CPU usage to minimize the
/// peak CPU requirement, then evaluate the schedule by simulation.
#[derive(Debug, Parser)]
#[command(name = "capplan", version)]
struct Args {
    /// Problem file (JSON).
    #[arg(long, value_name = "PATH", conflicts_with = "generate")]
    problem: Option<PathBuf>,

    /// Generate a synthetic problem, e.g. `n=30,seed=7`. Without
    /// --approach or --sweep the problem file itself is written.
    #[arg(long, value_name = "n=..,seed=..")]
    generate: Option<String>,

    /// none | det | cospis | soru-pk | milp
    #[arg(long)]
    approach: Option<Approach>,

    /// p50 | p75 | p100 | mode
    #[arg(long, default_value = "p50")]
    estimator: EstimatorKind,

    /// Scenario count K.
    #[arg(long, default_value_t = 25)]
    samples: usize,

    /// Fraction of scenarios allowed to break deadlines or precedences.
    #[arg(long, default_value_t = 0.4)]
    tolerance: f64,

    #[arg(long = "time-limit-s", default_value_t = 900)]
    time_limit_s: u64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Monte-Carlo executions.
    #[arg(long, default_value_t = 50)]
    runs: usize,

    /// exact | local-search | auto
    #[arg(long, default_value = "auto")]
    strategy: Strategy,

    /// Branch-and-bound node budget.
    #[arg(long)]
    node_limit: Option<u64>,

    /// Annealing move budget.
    #[arg(long)]
    search_iterations: Option<u64>,

    /// Report path; a CSV with the same stem is written next to it.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Sweep COSPiS over the K x alpha grid instead of a single run.
    #[arg(long)]
    sweep: bool,

    /// Comma-separated K values for --sweep.
    #[arg(long, value_delimiter = ',', requires = "sweep")]
    samples_grid: Option<Vec<usize>>,

    /// Comma-separated alpha values for --sweep.
    #[arg(long, value_delimiter = ',', requires = "sweep")]
    tolerance_grid: Option<Vec<f64>>,
}

enum Failure {
    Validation(String),
    Internal(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        if e.exit_code() == i32::from(EXIT_VALIDATION) {
            Failure::Validation(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

fn parse_generate(s: &str) -> Result<GenConfig, String> {
    let mut n = None;
    let mut seed = 0;
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part.split_once('=').ok_or_else(|| format!("expected key=value, got {part:?}"))?;
        match key {
            "n" => n = Some(value.parse().map_err(|_| format!("bad n: {value:?}"))?),
            "seed" => seed = value.parse().map_err(|_| format!("bad seed: {value:?}"))?,
            other => return Err(format!("unknown generate key {other:?}")),
        }
    }
    Ok(GenConfig::new(n.ok_or("generate needs n=..")?, seed))
}

fn csv_path(out: &Path) -> PathBuf {
    out.with_extension("csv")
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Internal(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, json: &str, csv: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            write(path, json)?;
            write(&csv_path(path), csv)
        }
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn load(args: &Args) -> Result<Problem, Failure> {
    if let Some(spec) = &args.generate {
        let cfg = parse_generate(spec).map_err(Failure::Validation)?;
        return generate(&cfg).map_err(|e| Failure::Validation(e.to_string()));
    }
    let Some(path) = &args.problem else {
        return Err(Failure::Validation("one of --problem or --generate is required".into()));
    };
    load_problem(path).map_err(|e| match e {
        LoadError::Io { .. } => Failure::Validation(e.to_string()),
        LoadError::Parse { .. } => Failure::Validation(e.to_string()),
        LoadError::Invalid(_) => Failure::Validation(format!("{e} (jobs: {})", e.job_ids().join(", "))),
    })
}

fn spec(args: &Args) -> RunSpec {
    let defaults = RunSpec::default();
    RunSpec {
        approach: args.approach.unwrap_or(defaults.approach),
        estimator: args.estimator,
        samples: args.samples,
        tolerance: args.tolerance,
        time_limit_s: args.time_limit_s,
        seed: args.seed,
        runs: args.runs,
        strategy: args.strategy,
        node_limit: args.node_limit.unwrap_or(defaults.node_limit),
        search_iterations: args.search_iterations.unwrap_or(defaults.search_iterations),
        restarts: defaults.restarts,
    }
}

fn main_inner(args: &Args) -> Result<u8, Failure> {
    let problem = load(args)?;
    if args.generate.is_some() && args.approach.is_none() && !args.sweep {
        let text = problem_to_string(&problem);
        match &args.out {
            Some(path) => write(path, &text)?,
            None => print!("{text}"),
        }
        return Ok(0);
    }
    let spec = spec(args);
    if args.sweep {
        let (k_default, a_default) = default_grids();
        let ks = args.samples_grid.clone().unwrap_or(k_default);
        let alphas = args.tolerance_grid.clone().unwrap_or(a_default);
        let report = sweep(&problem, &ks, &alphas, &spec)?;
        log::info!(
            "trend: {} of {} adjacent pairs drop beyond the noise band {:.4}",
            report.trend.drops_beyond_noise,
            report.trend.comparisons,
            report.trend.noise_band
        );
        emit(args.out.as_deref(), &report.to_json(), &report.to_csv())?;
        return Ok(0);
    }
    let report = run(&spec, &problem)?;
    if report.fallback {
        log::warn!("solver status {}; the report carries the manual schedule", report.status);
    }
    emit(args.out.as_deref(), &report.to_json(), &report.per_run_csv())?;
    Ok(report.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match main_inner(&args) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
