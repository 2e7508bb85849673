//! Experiment runners.
//!
//! Each runner resolves its config section, executes deterministically from
//! the run seed, and returns a [`ReportRecord`] plus the pass/fail checks
//! evaluated by `--check`.

use serde_json::json;

use crate::error::{ensure_len, Error, Result};
use crate::experiments::config::{ExperimentConfig, ReportFormat};
use crate::experiments::report::{config_hash, Histogram, MetricRow, ReportRecord};
use crate::experiments::scenarios::{population_env, risk_scenario_suite, three_arm};
use crate::experiments::ScenarioFile;
use crate::risk::{
    monte_carlo_risk, monte_carlo_risk_projected, sample_policy_returns,
    self_normalized_coverage, ConfidenceParam, RiskReport,
};
use crate::rng::{derive_seed, lane, StreamRng};
use crate::sim::{
    evaluate_policy, run_population, TabularSoftmaxPolicy, TrainConfig, TrainMethod,
    VanillaKlCoeff,
};
use crate::stats::{
    f_inverse_cdf, f_test_variance_ratio, normal_cdf, sample_mean, sample_variance,
    two_proportion_z_one_sided, welch_t_test, TestDof,
};
use crate::types::{DiagonalCovariance, RawPolicy, RewardVector};

/// Run parameters shared by all experiments.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: u64,
    pub trials: Option<u64>,
    pub project_simplex: bool,
}

/// One `--check` assertion outcome.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// Result of a runner: report rows, check outcomes, optional side payloads.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: ReportRecord,
    pub checks: Vec<CheckResult>,
    /// Serialized population records for the rlhf-sim experiment.
    pub population_dump: Option<String>,
}

/// The experiment selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Bandit3,
    Risk,
    FigDistribution,
    RlhfSim,
    Coverage,
    StatsReport,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Bandit3 => "bandit3",
            ExperimentKind::Risk => "risk",
            ExperimentKind::FigDistribution => "fig-distribution",
            ExperimentKind::RlhfSim => "rlhf-sim",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::StatsReport => "stats-report",
        }
    }
}

/// Dispatches one experiment run.
pub fn run_experiment(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    match kind {
        ExperimentKind::Bandit3 => run_bandit3(cfg, opts),
        ExperimentKind::Risk => run_risk(cfg, opts),
        ExperimentKind::FigDistribution => run_fig_distribution(cfg, opts),
        ExperimentKind::RlhfSim => run_rlhf_sim(cfg, opts),
        ExperimentKind::Coverage => run_coverage(cfg, opts),
        ExperimentKind::StatsReport => run_stats_report(cfg, opts),
    }
}

fn hash_for<T: serde::Serialize>(kind: ExperimentKind, opts: &RunOptions, section: &T) -> String {
    config_hash(&json!({
        "experiment": kind.name(),
        "seed": opts.seed,
        "trials": opts.trials,
        "project_simplex": opts.project_simplex,
        "section": section,
    }))
}

fn binomial_se(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}

/// Re-labels validation failures of config-derived values so they surface as
/// config errors rather than numerical failures.
fn from_config<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => e,
        other => Error::invalid(format!("config: {other}")),
    })
}

fn budget_from_config(epsilon: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid(format!("config: epsilon must be > 0, got {epsilon}")));
    }
    Ok(epsilon)
}

fn push_risk_rows(report: &mut ReportRecord, prefix: &str, r: &RiskReport) {
    let p = |name: &str| {
        if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}.{name}")
        }
    };
    if let (Some(v), Some(a)) = (r.analytic_vanilla, r.analytic_variance_aware) {
        report.rows.push(MetricRow::exact(p("analytic_risk_vanilla"), v));
        report.rows.push(MetricRow::exact(p("analytic_risk_variance_aware"), a));
    }
    report.rows.push(MetricRow::sampled(
        p("mc_risk_vanilla"),
        r.mc_vanilla,
        r.mc_std_error_vanilla,
        r.mc_trials,
    ));
    report.rows.push(MetricRow::sampled(
        p("mc_risk_variance_aware"),
        r.mc_variance_aware,
        r.mc_std_error_va,
        r.mc_trials,
    ));
    report.rows.push(MetricRow::exact(p("degenerate_trials"), r.degenerate_trials as f64));
}

// ---------------------------------------------------------------------------
// bandit3
// ---------------------------------------------------------------------------

fn run_bandit3(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let section = cfg.bandit3.clone().unwrap_or_default();
    let hash = hash_for(ExperimentKind::Bandit3, opts, &section);

    let default_scenario = section.r_star.is_none() && section.sigma.is_none();
    let r_star = from_config(RewardVector::new(
        section.r_star.clone().unwrap_or_else(|| three_arm::TRUE_REWARD.to_vec()),
    ))?;
    let sigma_sd = section.sigma.clone().unwrap_or_else(|| three_arm::SIGMA.to_vec());
    ensure_len(r_star.len(), sigma_sd.len())?;
    let sigma = from_config(DiagonalCovariance::new(
        sigma_sd.iter().map(|s| s * s).collect(),
    ))?;
    let epsilon = budget_from_config(section.epsilon.unwrap_or(three_arm::EPSILON))?;
    let bins = section.bins.unwrap_or(40);
    let trials = opts.trials.or(cfg.trials).unwrap_or(1000);
    let pi0 = RawPolicy::uniform(r_star.len())?;

    let samples = sample_policy_returns(
        &r_star,
        &sigma,
        &pi0,
        epsilon,
        trials,
        opts.seed,
        opts.project_simplex,
    )?;
    let risk = if opts.project_simplex {
        monte_carlo_risk_projected(&r_star, &sigma, &pi0, epsilon, trials, opts.seed)?
    } else {
        monte_carlo_risk(&r_star, &sigma, &pi0, epsilon, trials, opts.seed)?
    };

    let mut report = ReportRecord::new("bandit3", hash, opts.seed);
    report.rows.push(MetricRow::exact("reference_return", samples.reference_return));
    report.rows.push(MetricRow::exact("epsilon", epsilon));
    push_risk_rows(&mut report, "", &risk);
    let n = samples.vanilla.len() as f64;
    for (label, returns) in
        [("vanilla", &samples.vanilla), ("variance_aware", &samples.variance_aware)]
    {
        let mean = sample_mean(returns);
        let var = sample_variance(returns);
        report.rows.push(MetricRow::sampled(
            format!("return_mean_{label}"),
            mean,
            (var / n).sqrt(),
            n as u64,
        ));
        report.rows.push(MetricRow::sampled(
            format!("return_variance_{label}"),
            var,
            var * (2.0 / (n - 1.0)).sqrt(),
            n as u64,
        ));
        report.histograms.push(Histogram::from_samples(format!("returns_{label}"), returns, bins));
    }

    let mut checks = Vec::new();
    if default_scenario {
        let expected = 1.4833333333333334;
        checks.push(CheckResult::new(
            "reference_return",
            (samples.reference_return - expected).abs() <= 1e-4,
            format!("{} vs {expected} (tol 1e-4)", samples.reference_return),
        ));
    }
    checks.push(CheckResult::new(
        "risk_ordering",
        risk.mc_variance_aware <= risk.mc_vanilla,
        format!("va {} <= vanilla {}", risk.mc_variance_aware, risk.mc_vanilla),
    ));

    Ok(RunOutcome { report, checks, population_dump: None })
}

// ---------------------------------------------------------------------------
// risk
// ---------------------------------------------------------------------------

fn run_risk(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let section = cfg.risk.clone().unwrap_or_default();
    let hash = hash_for(ExperimentKind::Risk, opts, &section);
    let epsilon = budget_from_config(section.epsilon.unwrap_or(three_arm::EPSILON))?;
    let trials = opts.trials.or(cfg.trials).unwrap_or(100_000);

    let scenarios: Vec<(String, RewardVector, DiagonalCovariance)> = match &section.scenario_files
    {
        Some(files) => {
            let mut out = Vec::with_capacity(files.len());
            for (i, f) in files.iter().enumerate() {
                let (r, s) = ScenarioFile::load(f)?.to_gaussian_vectors()?;
                out.push((format!("scenario{i:02}"), r, s));
            }
            out
        }
        None => risk_scenario_suite(section.scenario_count.unwrap_or(20)),
    };

    let mut report = ReportRecord::new("risk", hash, opts.seed);
    report.rows.push(MetricRow::exact("epsilon", epsilon));
    let mut checks = Vec::new();
    for (i, (name, r_star, sigma)) in scenarios.iter().enumerate() {
        let pi0 = RawPolicy::uniform(r_star.len())?;
        let seed = derive_seed(opts.seed, i as u64);
        let risk = if opts.project_simplex {
            monte_carlo_risk_projected(r_star, sigma, &pi0, epsilon, trials, seed)?
        } else {
            monte_carlo_risk(r_star, sigma, &pi0, epsilon, trials, seed)?
        };
        push_risk_rows(&mut report, name, &risk);
        if opts.project_simplex {
            checks.push(CheckResult::new(
                format!("{name}.risk_ordering"),
                risk.mc_variance_aware <= risk.mc_vanilla,
                format!("va {} <= vanilla {}", risk.mc_variance_aware, risk.mc_vanilla),
            ));
        } else {
            for (label, mc, analytic) in [
                ("vanilla", risk.mc_vanilla, risk.analytic_vanilla.unwrap()),
                ("variance_aware", risk.mc_variance_aware, risk.analytic_variance_aware.unwrap()),
            ] {
                let band = 3.0 * binomial_se(analytic, trials as f64);
                checks.push(CheckResult::new(
                    format!("{name}.mc_agreement_{label}"),
                    (mc - analytic).abs() <= band,
                    format!("|{mc} - {analytic}| <= {band}"),
                ));
            }
        }
    }

    Ok(RunOutcome { report, checks, population_dump: None })
}

// ---------------------------------------------------------------------------
// fig-distribution
// ---------------------------------------------------------------------------

fn run_fig_distribution(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let section = cfg.fig_distribution.clone().unwrap_or_default();
    let hash = hash_for(ExperimentKind::FigDistribution, opts, &section);
    let n = section.dimension.unwrap_or(16);
    let epsilon = budget_from_config(section.epsilon.unwrap_or(0.01))?;
    let bins = section.bins.unwrap_or(40);
    let ranges = section.variance_ranges.clone().unwrap_or(vec![[3.0, 100.0], [3.0, 10.0]]);
    let trials = opts.trials.or(cfg.trials).unwrap_or(1000);
    if n == 0 {
        return Err(Error::invalid("dimension must be >= 1".to_string()));
    }
    for [lo, hi] in &ranges {
        if !(lo.is_finite() && hi.is_finite() && *lo > 0.0 && lo < hi) {
            return Err(Error::invalid(format!(
                "variance range must satisfy 0 < lo < hi, got [{lo}, {hi}]"
            )));
        }
    }

    // one true-reward vector shared by all variance settings
    let mut scen_rng = StreamRng::derive(opts.seed, &[lane::SCENARIO]);
    let r_star = loop {
        let r: Vec<f64> = (0..n).map(|_| scen_rng.standard_normal()).collect();
        if r.iter().map(|v| v * v).sum::<f64>() > 0.0 {
            break RewardVector::new(r)?;
        }
    };
    let pi0 = RawPolicy::uniform(n)?;

    let mut report = ReportRecord::new("fig-distribution", hash, opts.seed);
    report.rows.push(MetricRow::exact("dimension", n as f64));
    report.rows.push(MetricRow::exact("epsilon", epsilon));
    let mut ratios = Vec::with_capacity(ranges.len());
    for (idx, [lo, hi]) in ranges.iter().enumerate() {
        let mut range_rng = StreamRng::derive(opts.seed, &[lane::SCENARIO, idx as u64 + 1]);
        let sigma =
            DiagonalCovariance::new((0..n).map(|_| range_rng.uniform(*lo, *hi)).collect())?;
        let samples = sample_policy_returns(
            &r_star,
            &sigma,
            &pi0,
            epsilon,
            trials,
            derive_seed(opts.seed, idx as u64),
            opts.project_simplex,
        )?;
        let var_v = sample_variance(&samples.vanilla);
        let var_a = sample_variance(&samples.variance_aware);
        let ratio = var_v / var_a;
        ratios.push(ratio);
        let prefix = format!("range{idx}");
        report.rows.push(MetricRow::exact(format!("{prefix}.lo"), *lo));
        report.rows.push(MetricRow::exact(format!("{prefix}.hi"), *hi));
        let nn = samples.vanilla.len() as f64;
        report.rows.push(MetricRow::sampled(
            format!("{prefix}.return_variance_vanilla"),
            var_v,
            var_v * (2.0 / (nn - 1.0)).sqrt(),
            nn as u64,
        ));
        report.rows.push(MetricRow::sampled(
            format!("{prefix}.return_variance_variance_aware"),
            var_a,
            var_a * (2.0 / (nn - 1.0)).sqrt(),
            nn as u64,
        ));
        report.rows.push(MetricRow::sampled(
            format!("{prefix}.variance_ratio"),
            ratio,
            ratio * (4.0 / (nn - 1.0)).sqrt(),
            nn as u64,
        ));
        report.histograms.push(Histogram::from_samples(
            format!("range{idx}_vanilla"),
            &samples.vanilla,
            bins,
        ));
        report.histograms.push(Histogram::from_samples(
            format!("range{idx}_variance_aware"),
            &samples.variance_aware,
            bins,
        ));
    }

    let mut checks = Vec::new();
    if let Some(last) = ratios.last() {
        checks.push(CheckResult::new(
            "narrowest_range_ratio_at_least_one",
            *last >= 1.0,
            format!("ratio {last} >= 1"),
        ));
    }
    for w in ratios.windows(2) {
        checks.push(CheckResult::new(
            "ratio_ordering",
            w[0] > w[1],
            format!("{} > {}", w[0], w[1]),
        ));
    }
    if ratios.len() >= 2 {
        let (first, last) = (ratios[0], ratios[ratios.len() - 1]);
        checks.push(CheckResult::new(
            "ratio_separation",
            first >= 2.0 * last,
            format!("{first} >= 2 * {last}"),
        ));
    }

    Ok(RunOutcome { report, checks, population_dump: None })
}

// ---------------------------------------------------------------------------
// coverage
// ---------------------------------------------------------------------------

fn run_coverage(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let section = cfg.coverage.clone().unwrap_or_default();
    let hash = hash_for(ExperimentKind::Coverage, opts, &section);
    let n = section.dimension.unwrap_or(9);
    let deltas = section.deltas.clone().unwrap_or(vec![0.05, 0.1]);
    let trials = opts.trials.or(cfg.trials).unwrap_or(10_000);
    let r_star =
        from_config(RewardVector::new(section.r_star.clone().unwrap_or_else(|| vec![0.0; n])))?;
    let sigma = from_config(DiagonalCovariance::new(
        section.sigma2.clone().unwrap_or_else(|| vec![1.0; n]),
    ))?;
    ensure_len(n, r_star.len())?;
    ensure_len(n, sigma.len())?;

    let mut report = ReportRecord::new("coverage", hash, opts.seed);
    report.rows.push(MetricRow::exact("dimension", n as f64));
    let mut checks = Vec::new();
    for (i, &delta) in deltas.iter().enumerate() {
        let cov = self_normalized_coverage(
            &r_star,
            &sigma,
            ConfidenceParam::Delta(delta),
            trials,
            derive_seed(opts.seed, i as u64),
        )?;
        let prefix = format!("delta{i}");
        report.rows.push(MetricRow::exact(format!("{prefix}.delta"), cov.delta));
        report.rows.push(MetricRow::exact(format!("{prefix}.threshold"), cov.threshold));
        report.rows.push(MetricRow::sampled(
            format!("{prefix}.empirical_coverage"),
            cov.empirical_coverage,
            binomial_se(cov.empirical_coverage, cov.trials as f64),
            cov.trials,
        ));
        report.rows.push(MetricRow::exact(
            format!("{prefix}.passed"),
            if cov.passed { 1.0 } else { 0.0 },
        ));
        checks.push(CheckResult::new(
            format!("{prefix}.coverage"),
            cov.passed,
            format!("{} >= {}", cov.empirical_coverage, 1.0 - cov.delta),
        ));
    }

    Ok(RunOutcome { report, checks, population_dump: None })
}

// ---------------------------------------------------------------------------
// rlhf-sim
// ---------------------------------------------------------------------------

fn resolved_train_config(
    section: &crate::experiments::config::RlhfSimConfig,
    method: TrainMethod,
    seed: u64,
) -> TrainConfig {
    let mut config = TrainConfig::new(method);
    if let Some(i) = section.iterations {
        config.iterations = i;
    }
    if let Some(b) = section.batch_size {
        config.batch_size = b;
    }
    if let Some(lr) = section.learning_rate {
        config.learning_rate = lr;
    }
    if let Some(c) = section.vanilla_kl_coeff {
        config.vanilla_kl_coeff = VanillaKlCoeff::Fixed(c);
    }
    config.seed = seed;
    config
}

fn run_rlhf_sim(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let section = cfg.rlhf_sim.clone().unwrap_or_default();
    let hash = hash_for(ExperimentKind::RlhfSim, opts, &section);
    let count = section.population.unwrap_or(80);
    let eval_prompts = section.eval_prompts.unwrap_or(512);
    let alpha = section.alpha.unwrap_or(0.05);
    let env = match &section.scenario_file {
        Some(path) => ScenarioFile::load(path)?.to_environment()?,
        None => population_env(section.reward_range.unwrap_or(100.0))?,
    };

    let vanilla_cfg =
        resolved_train_config(&section, TrainMethod::Vanilla, derive_seed(opts.seed, 0x11));
    let va_cfg = resolved_train_config(
        &section,
        TrainMethod::VarianceAware,
        derive_seed(opts.seed, 0x12),
    );
    from_config(vanilla_cfg.validate())?;
    let vanilla = run_population(&env, &vanilla_cfg, count, eval_prompts)?;
    let va = run_population(&env, &va_cfg, count, eval_prompts)?;

    // reference returns: the uniform policy evaluated `count` times on fresh
    // streams
    let reference = TabularSoftmaxPolicy::uniform(env.num_prompts(), env.num_responses())?;
    let ref_seed = derive_seed(opts.seed, 0x13);
    let reference_returns: Vec<f64> = (0..count)
        .map(|i| evaluate_policy(&env, &reference, eval_prompts, derive_seed(ref_seed, i as u64)))
        .collect::<Result<_>>()?;
    let ref_mean = sample_mean(&reference_returns);

    let n = count as usize;
    let mean_v = sample_mean(&vanilla.eval_returns);
    let mean_a = sample_mean(&va.eval_returns);
    let var_v = sample_variance(&vanilla.eval_returns);
    let var_a = sample_variance(&va.eval_returns);
    let p1 = vanilla.eval_returns.iter().filter(|&&r| r <= ref_mean).count() as f64 / n as f64;
    let p2 = va.eval_returns.iter().filter(|&&r| r <= ref_mean).count() as f64 / n as f64;

    let f = f_test_variance_ratio(var_v, var_a, n, n, alpha)?;
    let t = welch_t_test(mean_v, var_v, n, mean_a, var_a, n, alpha)?;
    let z = two_proportion_z_one_sided(p2, p1, n, alpha);

    let mut report = ReportRecord::new("rlhf-sim", hash, opts.seed);
    report.rows.push(MetricRow::exact("population", count as f64));
    report.rows.push(MetricRow::exact("eval_prompts", eval_prompts as f64));
    report.rows.push(MetricRow::sampled(
        "mean_return_reference",
        ref_mean,
        (sample_variance(&reference_returns) / n as f64).sqrt(),
        count as u64,
    ));
    let var_se = |v: f64| v * (2.0 / (n as f64 - 1.0)).sqrt();
    report.rows.push(MetricRow::sampled("variance_vanilla", var_v, var_se(var_v), count as u64));
    report
        .rows
        .push(MetricRow::sampled("variance_variance_aware", var_a, var_se(var_a), count as u64));
    report.rows.push(MetricRow::exact("f_score", f.statistic));
    report.rows.push(MetricRow::exact("f_critical", f.critical_value));
    report.rows.push(MetricRow::exact("f_p_value", f.p_value));
    report.rows.push(MetricRow::exact("f_reject", if f.reject_null { 1.0 } else { 0.0 }));
    report.rows.push(MetricRow::sampled(
        "mean_vanilla",
        mean_v,
        (var_v / n as f64).sqrt(),
        count as u64,
    ));
    report.rows.push(MetricRow::sampled(
        "mean_variance_aware",
        mean_a,
        (var_a / n as f64).sqrt(),
        count as u64,
    ));
    report.rows.push(MetricRow::exact("t_score", t.statistic));
    if let TestDof::One(d) = t.dof {
        report.rows.push(MetricRow::exact("t_dof", d));
    }
    report.rows.push(MetricRow::exact("t_critical", t.critical_value));
    report.rows.push(MetricRow::exact("t_p_value", t.p_value));
    report.rows.push(MetricRow::exact("t_reject", if t.reject_null { 1.0 } else { 0.0 }));
    report.rows.push(MetricRow::sampled(
        "risk_vanilla",
        p1,
        binomial_se(p1, n as f64),
        count as u64,
    ));
    report.rows.push(MetricRow::sampled(
        "risk_variance_aware",
        p2,
        binomial_se(p2, n as f64),
        count as u64,
    ));

    let mut checks = vec![
        CheckResult::new(
            "f_test_rejects_equal_variances",
            f.reject_null,
            format!("F = {} vs critical {}", f.statistic, f.critical_value),
        ),
        CheckResult::new(
            "welch_fails_to_reject_equal_means",
            !t.reject_null,
            format!("t = {} vs critical {}", t.statistic, t.critical_value),
        ),
    ];
    match z {
        Ok(z) => {
            report.rows.push(MetricRow::exact("z_score", z.statistic));
            report.rows.push(MetricRow::exact("z_p_value", z.p_value));
            report.rows.push(MetricRow::exact("z_reject", if z.reject_null { 1.0 } else { 0.0 }));
        }
        Err(_) => {
            // both risk proportions at the same degenerate value
            report.rows.push(MetricRow::exact("z_degenerate", 1.0));
        }
    }

    // reward-range sweep
    if let Some(ranges) = &section.reward_ranges {
        let repeats = section.sweep_repeats.unwrap_or(10).max(1);
        let mut sweep_ratios = Vec::with_capacity(ranges.len());
        for (ri, &range) in ranges.iter().enumerate() {
            let env = population_env(range)?;
            let mut per_repeat = Vec::with_capacity(repeats as usize);
            for rep in 0..repeats {
                let label = 0x100 + (ri as u64) * 0x10 + rep as u64;
                let vc = resolved_train_config(
                    &section,
                    TrainMethod::Vanilla,
                    derive_seed(opts.seed, label),
                );
                let ac = resolved_train_config(
                    &section,
                    TrainMethod::VarianceAware,
                    derive_seed(opts.seed, label + 1_000_000),
                );
                let pv = run_population(&env, &vc, count, eval_prompts)?;
                let pa = run_population(&env, &ac, count, eval_prompts)?;
                per_repeat
                    .push(sample_variance(&pv.eval_returns) / sample_variance(&pa.eval_returns));
            }
            let ratio = sample_mean(&per_repeat);
            let se = if per_repeat.len() > 1 {
                (sample_variance(&per_repeat) / per_repeat.len() as f64).sqrt()
            } else {
                0.0
            };
            sweep_ratios.push(ratio);
            report.rows.push(MetricRow::sampled(
                format!("sweep_range{ri}.variance_ratio"),
                ratio,
                se,
                per_repeat.len() as u64,
            ));
            report.rows.push(MetricRow::exact(format!("sweep_range{ri}.range_max"), range));
        }
        for (i, w) in sweep_ratios.windows(2).enumerate() {
            checks.push(CheckResult::new(
                format!("sweep_monotone_{i}"),
                w[0] >= w[1],
                format!("{} >= {}", w[0], w[1]),
            ));
        }
    }

    // serialized population records
    let mut records = Vec::new();
    for pop in [&vanilla, &va] {
        let master = match pop.method {
            TrainMethod::Vanilla => vanilla_cfg.seed,
            TrainMethod::VarianceAware => va_cfg.seed,
        };
        for (i, (policy, ret)) in pop.policies.iter().zip(&pop.eval_returns).enumerate() {
            let rows: Vec<Vec<f64>> =
                (0..policy.num_prompts()).map(|x| policy.row(x).to_vec()).collect();
            records.push(json!({
                "method": pop.method.label(),
                "policy_index": i,
                "seed": derive_seed(master, i as u64),
                "eval_return": ret,
                "final_logits": rows,
            }));
        }
    }
    let dump = format!("{:#}\n", serde_json::Value::Array(records));

    Ok(RunOutcome { report, checks, population_dump: Some(dump) })
}

// ---------------------------------------------------------------------------
// stats-report
// ---------------------------------------------------------------------------

/// Published summary statistics of the reference study, replayed through the
/// test implementations as a self-check. Columns: label, vanilla variance,
/// variance-aware variance, vanilla mean, variance-aware mean, variance-aware
/// risk, vanilla risk.
const REFERENCE_SUMMARY: [(&str, f64, f64, f64, f64, f64, f64); 7] = [
    ("gpt2_ensemble", 0.076, 0.012, 0.31, 0.34, 0.05, 0.29),
    ("mistral7b_gemini15", 0.13, 0.04, 29.21, 29.25, 0.41, 0.48),
    ("mistral7b_gemini20", 0.18, 0.02, 33.09, 33.06, 0.07, 0.36),
    ("mistral7b_deepseek", 0.06, 0.02, 45.97, 45.98, 0.06, 0.18),
    ("qwen25_gemini15", 0.05, 0.02, 28.37, 28.36, 0.24, 0.29),
    ("qwen25_gemini20", 0.09, 0.02, 32.12, 32.13, 0.16, 0.39),
    ("qwen25_deepseek", 0.05, 0.02, 46.01, 46.00, 0.24, 0.29),
];

/// Critical value the reference study reports for the sample-size-80
/// variance test. Kept as data; the exact quantile is recomputed next to it.
const REFERENCE_F_CRITICAL: f64 = 1.616;

const REFERENCE_SAMPLE_SIZE: usize = 80;

fn run_stats_report(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let section = cfg.stats_report.clone().unwrap_or_default();
    let hash = hash_for(ExperimentKind::StatsReport, opts, &section);
    let alpha = section.alpha.unwrap_or(0.05);
    let n = REFERENCE_SAMPLE_SIZE;

    let mut report = ReportRecord::new("stats-report", hash, opts.seed);
    let mut checks = Vec::new();

    for (label, var_v, var_a, mean_v, mean_a, risk_a, risk_v) in REFERENCE_SUMMARY {
        let f = f_test_variance_ratio(var_v, var_a, n, n, alpha)?;
        report.rows.push(MetricRow::exact(format!("{label}.f_score"), f.statistic));
        report.rows.push(MetricRow::exact(
            format!("{label}.f_reject"),
            if f.reject_null { 1.0 } else { 0.0 },
        ));
        let t = welch_t_test(mean_v, var_v, n, mean_a, var_a, n, alpha)?;
        report.rows.push(MetricRow::exact(format!("{label}.t_score"), t.statistic));
        if let TestDof::One(d) = t.dof {
            report.rows.push(MetricRow::exact(format!("{label}.t_dof"), d));
        }
        report.rows.push(MetricRow::exact(format!("{label}.t_critical"), t.critical_value));
        report.rows.push(MetricRow::exact(
            format!("{label}.t_reject"),
            if t.reject_null { 1.0 } else { 0.0 },
        ));
        let z = two_proportion_z_one_sided(risk_a, risk_v, n, alpha)?;
        report.rows.push(MetricRow::exact(format!("{label}.z_p_value"), z.p_value));
        report.rows.push(MetricRow::exact(
            format!("{label}.z_reject"),
            if z.reject_null { 1.0 } else { 0.0 },
        ));
    }

    let f_crit = f_inverse_cdf(1.0 - alpha / 2.0, (n - 1) as f64, (n - 1) as f64)?;
    report.rows.push(MetricRow::exact("f_critical_computed", f_crit));
    report.rows.push(MetricRow::exact("f_critical_reference", REFERENCE_F_CRITICAL));
    let phi = normal_cdf(-1.7320508);
    report.rows.push(MetricRow::exact("phi_at_minus_1_7320508", phi));

    let f_gpt2 = report.value("gpt2_ensemble.f_score").unwrap();
    checks.push(CheckResult::new(
        "f_score_gpt2",
        (f_gpt2 - 6.33).abs() <= 0.01,
        format!("{f_gpt2} vs 6.33 (tol 0.01)"),
    ));
    checks.push(CheckResult::new(
        "f_critical_matches_reference",
        (f_crit - REFERENCE_F_CRITICAL).abs() <= 0.01,
        format!("computed {f_crit} vs reference {REFERENCE_F_CRITICAL} (tol 0.01)"),
    ));
    let z_gpt2 = report.value("gpt2_ensemble.z_p_value").unwrap();
    checks.push(CheckResult::new(
        "z_p_value_gpt2",
        (3e-5 / 1.5..=3e-5 * 1.5).contains(&z_gpt2),
        format!("{z_gpt2} within factor 1.5 of 3e-5"),
    ));
    checks.push(CheckResult::new(
        "phi_golden",
        (phi - 0.0416323).abs() <= 1e-6,
        format!("{phi} vs 0.0416323 (tol 1e-6)"),
    ));

    Ok(RunOutcome { report, checks, population_dump: None })
}

/// Writes an outcome's report and side files.
pub fn write_outcome(
    outcome: &RunOutcome,
    out: Option<&std::path::Path>,
    format: ReportFormat,
) -> Result<Vec<std::path::PathBuf>> {
    let mut written = outcome.report.write(out, format)?;
    if let (Some(dump), Some(path)) = (&outcome.population_dump, out) {
        let side = crate::experiments::report::sibling_path(path, "population", "json");
        std::fs::write(&side, dump)
            .map_err(|e| Error::invalid(format!("cannot write {}: {e}", side.display())))?;
        written.push(side);
    }
    Ok(written)
}
