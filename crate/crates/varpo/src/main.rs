//! `varpo` experiment CLI.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical failure, 4 check
//! failure under `--check`. Worker-pool size is controlled by the
//! `VARPO_WORKERS` environment variable (default: all cores).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use varpo::experiments::{
    run_experiment, write_outcome, ExperimentConfig, ExperimentKind, ReportFormat, RunOptions,
};
use varpo::Error;

#[derive(Parser)]
#[command(name = "varpo", version, about = "variance-aware policy optimization experiments")]
struct Cli {
    #[command(subcommand)]
    experiment: Experiment,
}

#[derive(Subcommand)]
enum Experiment {
    /// Three-arm example: Monte Carlo risk and return histograms.
    Bandit3(CommonArgs),
    /// Analytic vs Monte Carlo underperformance risk over a scenario list.
    Risk(CommonArgs),
    /// Return-variance ratios under sampled variance ranges.
    FigDistribution(CommonArgs),
    /// Population study of the tabular trainer with the three summary tests.
    RlhfSim(CommonArgs),
    /// Empirical coverage of the self-normalized noise bound.
    Coverage(CommonArgs),
    /// Replays the reference summary statistics through the test suite.
    StatsReport(CommonArgs),
}

impl Experiment {
    fn split(&self) -> (ExperimentKind, &CommonArgs) {
        match self {
            Experiment::Bandit3(a) => (ExperimentKind::Bandit3, a),
            Experiment::Risk(a) => (ExperimentKind::Risk, a),
            Experiment::FigDistribution(a) => (ExperimentKind::FigDistribution, a),
            Experiment::RlhfSim(a) => (ExperimentKind::RlhfSim, a),
            Experiment::Coverage(a) => (ExperimentKind::Coverage, a),
            Experiment::StatsReport(a) => (ExperimentKind::StatsReport, a),
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file with per-experiment sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials (overrides the config).
    #[arg(long)]
    trials: Option<u64>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Assert the experiment's acceptance bands and exit 4 on failure.
    #[arg(long)]
    check: bool,
    /// Project closed-form policies onto the simplex (Monte Carlo risks
    /// only; analytic rows are omitted).
    #[arg(long)]
    project_simplex: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_CHECK: u8 = 4;

fn init_worker_pool() {
    if let Ok(value) = std::env::var("VARPO_WORKERS") {
        match value.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid VARPO_WORKERS={value}"),
        }
    }
}

fn run() -> Result<ExitCode, (u8, String)> {
    let cli = Cli::parse();
    let (kind, args) = cli.experiment.split();

    let config = match &args.config {
        Some(path) => ExperimentConfig::load(path)
            .map_err(|e| (EXIT_CONFIG, format!("config error: {e}")))?,
        None => ExperimentConfig::default(),
    };
    let opts = RunOptions {
        seed: args.seed.or(config.seed).unwrap_or(1),
        trials: args.trials.or(config.trials),
        project_simplex: args.project_simplex,
    };
    let format = args
        .format
        .map(ReportFormat::from)
        .or(config.format)
        .unwrap_or(ReportFormat::Csv);
    let out = args.out.clone().or_else(|| config.out.clone());

    let classify = |e: &Error| -> u8 {
        match e {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => EXIT_CONFIG,
            _ => EXIT_NUMERIC,
        }
    };
    let outcome = run_experiment(kind, &config, &opts)
        .map_err(|e| (classify(&e), format!("{} failed: {e}", kind.name())))?;
    write_outcome(&outcome, out.as_deref(), format)
        .map_err(|e| (EXIT_CONFIG, format!("write failed: {e}")))?;

    if args.check {
        let mut all_ok = true;
        for check in &outcome.checks {
            let tag = if check.passed { "PASS" } else { "FAIL" };
            eprintln!("[{tag}] {}: {}", check.name, check.detail);
            all_ok &= check.passed;
        }
        if !all_ok {
            return Err((EXIT_CHECK, "one or more checks failed".to_string()));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_worker_pool();
    match run() {
        Ok(code) => code,
        Err((code, message)) => {
            eprintln!("{message}");
            ExitCode::from(code)
        }
    }
}
