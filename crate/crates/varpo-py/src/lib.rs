//! CPython extension module `varpo_py`: the main types and operations of the
//! `varpo` toolkit behind a plain-lists interface.
//!
//! Build with `cargo build -p varpo-py --release`; the resulting
//! `libvarpo_py.so` imports as `varpo_py` (see `python/smoke_test.py`).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use varpo::experiments::ScenarioFile;
use varpo::optimize;
use varpo::reward::IntervalObservation;
use varpo::risk;
use varpo::rng::{lane, StreamRng};
use varpo::sim;
use varpo::stats;
use varpo::types::{DiagonalCovariance, PolicyWeights, RawPolicy, RewardVector, SimplexPolicy};

fn err(e: varpo::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn reward(values: Vec<f64>) -> PyResult<RewardVector> {
    RewardVector::new(values).map_err(err)
}

fn covariance(sigma2: Vec<f64>) -> PyResult<DiagonalCovariance> {
    DiagonalCovariance::new(sigma2).map_err(err)
}

/// A boundary solution of a trust-region problem.
#[pyclass(name = "ClosedFormSolution", frozen)]
struct PyClosedFormSolution {
    #[pyo3(get)]
    policy: Vec<f64>,
    #[pyo3(get)]
    beta: f64,
    #[pyo3(get)]
    step_scale: f64,
    #[pyo3(get)]
    constraint_value: f64,
}

impl From<optimize::ClosedFormSolution> for PyClosedFormSolution {
    fn from(s: optimize::ClosedFormSolution) -> Self {
        Self {
            policy: s.policy.weights().to_vec(),
            beta: s.beta,
            step_scale: s.step_scale,
            constraint_value: s.constraint_value,
        }
    }
}

/// Analytic and Monte Carlo underperformance probabilities.
#[pyclass(name = "RiskReport", frozen)]
struct PyRiskReport {
    #[pyo3(get)]
    analytic_vanilla: Option<f64>,
    #[pyo3(get)]
    analytic_variance_aware: Option<f64>,
    #[pyo3(get)]
    mc_vanilla: f64,
    #[pyo3(get)]
    mc_variance_aware: f64,
    #[pyo3(get)]
    mc_trials: u64,
    #[pyo3(get)]
    mc_std_error_vanilla: f64,
    #[pyo3(get)]
    mc_std_error_va: f64,
    #[pyo3(get)]
    degenerate_trials: u64,
}

impl From<risk::RiskReport> for PyRiskReport {
    fn from(r: risk::RiskReport) -> Self {
        Self {
            analytic_vanilla: r.analytic_vanilla,
            analytic_variance_aware: r.analytic_variance_aware,
            mc_vanilla: r.mc_vanilla,
            mc_variance_aware: r.mc_variance_aware,
            mc_trials: r.mc_trials,
            mc_std_error_vanilla: r.mc_std_error_vanilla,
            mc_std_error_va: r.mc_std_error_va,
            degenerate_trials: r.degenerate_trials,
        }
    }
}

/// Empirical coverage of the self-normalized noise bound.
#[pyclass(name = "CoverageReport", frozen)]
struct PyCoverageReport {
    #[pyo3(get)]
    delta: f64,
    #[pyo3(get)]
    threshold: f64,
    #[pyo3(get)]
    empirical_coverage: f64,
    #[pyo3(get)]
    trials: u64,
    #[pyo3(get)]
    passed: bool,
}

/// Outcome of a hypothesis test.
#[pyclass(name = "StatTestResult", frozen)]
struct PyStatTestResult {
    #[pyo3(get)]
    statistic: f64,
    #[pyo3(get)]
    dof: (f64, Option<f64>),
    #[pyo3(get)]
    p_value: f64,
    #[pyo3(get)]
    critical_value: f64,
    #[pyo3(get)]
    reject_null: bool,
    #[pyo3(get)]
    alpha: f64,
}

impl From<stats::StatTestResult> for PyStatTestResult {
    fn from(r: stats::StatTestResult) -> Self {
        let dof = match r.dof {
            stats::TestDof::One(d) => (d, None),
            stats::TestDof::Pair(a, b) => (a, Some(b)),
        };
        Self {
            statistic: r.statistic,
            dof,
            p_value: r.p_value,
            critical_value: r.critical_value,
            reject_null: r.reject_null,
            alpha: r.alpha,
        }
    }
}

#[pyfunction]
fn weighted_norm(d: Vec<f64>, sigma2: Vec<f64>) -> PyResult<f64> {
    covariance(sigma2)?.weighted_norm(&d).map_err(err)
}

#[pyfunction]
fn inverse_weighted_norm(d: Vec<f64>, sigma2: Vec<f64>) -> PyResult<f64> {
    covariance(sigma2)?.inverse_weighted_norm(&d).map_err(err)
}

#[pyfunction]
fn lambda_min(sigma2: Vec<f64>) -> PyResult<f64> {
    Ok(covariance(sigma2)?.lambda_min())
}

#[pyfunction]
fn scale_epsilon(sigma2: Vec<f64>, epsilon: f64) -> PyResult<f64> {
    Ok(optimize::scale_epsilon(&covariance(sigma2)?, epsilon))
}

#[pyfunction]
fn solve_vanilla(
    pi0: Vec<f64>,
    r_hat: Vec<f64>,
    epsilon: f64,
) -> PyResult<PyClosedFormSolution> {
    let pi0 = RawPolicy::new(pi0).map_err(err)?;
    optimize::solve_vanilla(&pi0, &reward(r_hat)?, epsilon).map(Into::into).map_err(err)
}

#[pyfunction]
fn solve_variance_aware(
    pi0: Vec<f64>,
    r_hat: Vec<f64>,
    sigma2: Vec<f64>,
    epsilon_tilde: f64,
) -> PyResult<PyClosedFormSolution> {
    let pi0 = RawPolicy::new(pi0).map_err(err)?;
    optimize::solve_variance_aware(&pi0, &reward(r_hat)?, &covariance(sigma2)?, epsilon_tilde)
        .map(Into::into)
        .map_err(err)
}

#[pyfunction]
fn surrogate_objective(
    d: Vec<f64>,
    r_hat: Vec<f64>,
    sigma2: Vec<f64>,
    beta: f64,
) -> PyResult<f64> {
    optimize::surrogate_objective(&d, &reward(r_hat)?, &covariance(sigma2)?, beta).map_err(err)
}

#[pyfunction]
fn exp_tilt_policy(
    pi0: Vec<f64>,
    r_hat: Vec<f64>,
    sigma2: Vec<f64>,
    beta: f64,
) -> PyResult<Vec<f64>> {
    let pi0 = SimplexPolicy::new(pi0).map_err(err)?;
    optimize::exp_tilt_policy(&pi0, &r_hat, &sigma2, beta)
        .map(|p| p.probabilities().to_vec())
        .map_err(err)
}

#[pyfunction]
fn project_to_simplex(weights: Vec<f64>) -> PyResult<Vec<f64>> {
    let raw = RawPolicy::new(weights).map_err(err)?;
    optimize::project_to_simplex(&raw).map(|p| p.probabilities().to_vec()).map_err(err)
}

#[pyfunction]
fn return_of(policy: Vec<f64>, r_star: Vec<f64>) -> PyResult<f64> {
    let policy = RawPolicy::new(policy).map_err(err)?;
    risk::return_of(&policy, &reward(r_star)?).map_err(err)
}

#[pyfunction]
fn analytic_risk_vanilla(r_star: Vec<f64>, sigma2: Vec<f64>) -> PyResult<f64> {
    risk::analytic_risk_vanilla(&reward(r_star)?, &covariance(sigma2)?).map_err(err)
}

#[pyfunction]
fn analytic_risk_variance_aware(r_star: Vec<f64>, sigma2: Vec<f64>) -> PyResult<f64> {
    risk::analytic_risk_variance_aware(&reward(r_star)?, &covariance(sigma2)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (r_star, sigma2, pi0, epsilon, trials, seed, project_simplex = false))]
#[allow(clippy::too_many_arguments)]
fn monte_carlo_risk(
    r_star: Vec<f64>,
    sigma2: Vec<f64>,
    pi0: Vec<f64>,
    epsilon: f64,
    trials: u64,
    seed: u64,
    project_simplex: bool,
) -> PyResult<PyRiskReport> {
    let r = reward(r_star)?;
    let s = covariance(sigma2)?;
    let pi0 = RawPolicy::new(pi0).map_err(err)?;
    let report = if project_simplex {
        risk::monte_carlo_risk_projected(&r, &s, &pi0, epsilon, trials, seed)
    } else {
        risk::monte_carlo_risk(&r, &s, &pi0, epsilon, trials, seed)
    };
    report.map(Into::into).map_err(err)
}

#[pyfunction]
fn self_normalized_coverage(
    r_star: Vec<f64>,
    sigma2: Vec<f64>,
    delta: f64,
    trials: u64,
    seed: u64,
) -> PyResult<PyCoverageReport> {
    let report = risk::self_normalized_coverage(
        &reward(r_star)?,
        &covariance(sigma2)?,
        risk::ConfidenceParam::Delta(delta),
        trials,
        seed,
    )
    .map_err(err)?;
    Ok(PyCoverageReport {
        delta: report.delta,
        threshold: report.threshold,
        empirical_coverage: report.empirical_coverage,
        trials: report.trials,
        passed: report.passed,
    })
}

#[pyfunction]
fn sample_noisy_reward(r_star: Vec<f64>, sigma2: Vec<f64>, seed: u64) -> PyResult<Vec<f64>> {
    let model = varpo::reward::GaussianRewardModel::new(reward(r_star)?, covariance(sigma2)?)
        .map_err(err)?;
    let mut rng = StreamRng::derive(seed, &[lane::TRIAL]);
    Ok(model.sample_noisy_reward(&mut rng).values().to_vec())
}

#[pyfunction]
#[pyo3(signature = (a, b, range_max = 100.0, seed = 0))]
fn sample_interval_reward(a: f64, b: f64, range_max: f64, seed: u64) -> PyResult<f64> {
    let obs = IntervalObservation::new(a, b, range_max).map_err(err)?;
    let mut rng = StreamRng::derive(seed, &[lane::TRIAL]);
    Ok(obs.sample_reward(&mut rng))
}

#[pyfunction]
#[pyo3(signature = (a, b, range_max = 100.0))]
fn interval_variance(a: f64, b: f64, range_max: f64) -> PyResult<f64> {
    Ok(IntervalObservation::new(a, b, range_max).map_err(err)?.variance())
}

#[pyfunction]
#[pyo3(signature = (a, b, range_max = 100.0))]
fn interval_true_reward(a: f64, b: f64, range_max: f64) -> PyResult<f64> {
    Ok(IntervalObservation::new(a, b, range_max).map_err(err)?.true_reward())
}

#[pyfunction]
fn normal_cdf(z: f64) -> f64 {
    stats::normal_cdf(z)
}

#[pyfunction]
fn t_cdf(x: f64, df: f64) -> PyResult<f64> {
    stats::t_cdf(x, df).map_err(err)
}

#[pyfunction]
fn f_cdf(x: f64, df1: f64, df2: f64) -> PyResult<f64> {
    stats::f_cdf(x, df1, df2).map_err(err)
}

#[pyfunction]
fn chi2_tail(x: f64, df: f64) -> PyResult<f64> {
    stats::chi2_tail(x, df).map_err(err)
}

#[pyfunction]
fn f_test_variance_ratio(
    var1: f64,
    var2: f64,
    n1: usize,
    n2: usize,
    alpha: f64,
) -> PyResult<PyStatTestResult> {
    stats::f_test_variance_ratio(var1, var2, n1, n2, alpha).map(Into::into).map_err(err)
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn welch_t_test(
    mean1: f64,
    var1: f64,
    n1: usize,
    mean2: f64,
    var2: f64,
    n2: usize,
    alpha: f64,
) -> PyResult<PyStatTestResult> {
    stats::welch_t_test(mean1, var1, n1, mean2, var2, n2, alpha).map(Into::into).map_err(err)
}

#[pyfunction]
fn two_proportion_z_one_sided(
    p_hat2: f64,
    p_hat1: f64,
    n: usize,
    alpha: f64,
) -> PyResult<PyStatTestResult> {
    stats::two_proportion_z_one_sided(p_hat2, p_hat1, n, alpha).map(Into::into).map_err(err)
}

fn parse_method(method: &str) -> PyResult<sim::TrainMethod> {
    match method {
        "vanilla" => Ok(sim::TrainMethod::Vanilla),
        "variance_aware" => Ok(sim::TrainMethod::VarianceAware),
        other => Err(PyValueError::new_err(format!(
            "method must be 'vanilla' or 'variance_aware', got {other:?}"
        ))),
    }
}

fn env_from_json(scenario_json: &str) -> PyResult<sim::TabularEnvironment> {
    let scenario: ScenarioFile = serde_json_from_str(scenario_json)?;
    scenario.to_environment().map_err(err)
}

fn serde_json_from_str(text: &str) -> PyResult<ScenarioFile> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("scenario: {e}")))
}

/// Trains one tabular softmax policy on a JSON scenario and returns its
/// per-prompt logits.
#[pyfunction]
#[pyo3(signature = (scenario_json, method, seed, iterations = 20, batch_size = 8, learning_rate = 0.015))]
fn train_tabular_policy(
    scenario_json: &str,
    method: &str,
    seed: u64,
    iterations: u32,
    batch_size: u32,
    learning_rate: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let env = env_from_json(scenario_json)?;
    let mut config = sim::TrainConfig::new(parse_method(method)?);
    config.iterations = iterations;
    config.batch_size = batch_size;
    config.learning_rate = learning_rate;
    config.seed = seed;
    let policy = sim::train_policy(&env, &config).map_err(err)?;
    Ok((0..policy.num_prompts()).map(|x| policy.row(x).to_vec()).collect())
}

/// Trains a population on a JSON scenario and returns the evaluated returns.
#[pyfunction]
#[pyo3(signature = (scenario_json, method, count, seed, eval_prompts = 512, iterations = 20, batch_size = 8, learning_rate = 0.015))]
#[allow(clippy::too_many_arguments)]
fn population_eval_returns(
    scenario_json: &str,
    method: &str,
    count: u32,
    seed: u64,
    eval_prompts: u32,
    iterations: u32,
    batch_size: u32,
    learning_rate: f64,
) -> PyResult<Vec<f64>> {
    let env = env_from_json(scenario_json)?;
    let mut config = sim::TrainConfig::new(parse_method(method)?);
    config.iterations = iterations;
    config.batch_size = batch_size;
    config.learning_rate = learning_rate;
    config.seed = seed;
    let population = sim::run_population(&env, &config, count, eval_prompts).map_err(err)?;
    Ok(population.eval_returns)
}

#[pymodule]
fn varpo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyClosedFormSolution>()?;
    m.add_class::<PyRiskReport>()?;
    m.add_class::<PyCoverageReport>()?;
    m.add_class::<PyStatTestResult>()?;
    m.add_function(wrap_pyfunction!(weighted_norm, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_weighted_norm, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_min, m)?)?;
    m.add_function(wrap_pyfunction!(scale_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(solve_vanilla, m)?)?;
    m.add_function(wrap_pyfunction!(solve_variance_aware, m)?)?;
    m.add_function(wrap_pyfunction!(surrogate_objective, m)?)?;
    m.add_function(wrap_pyfunction!(exp_tilt_policy, m)?)?;
    m.add_function(wrap_pyfunction!(project_to_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(return_of, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_risk_vanilla, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_risk_variance_aware, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_risk, m)?)?;
    m.add_function(wrap_pyfunction!(self_normalized_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(sample_noisy_reward, m)?)?;
    m.add_function(wrap_pyfunction!(sample_interval_reward, m)?)?;
    m.add_function(wrap_pyfunction!(interval_variance, m)?)?;
    m.add_function(wrap_pyfunction!(interval_true_reward, m)?)?;
    m.add_function(wrap_pyfunction!(normal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(t_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(f_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_tail, m)?)?;
    m.add_function(wrap_pyfunction!(f_test_variance_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(two_proportion_z_one_sided, m)?)?;
    m.add_function(wrap_pyfunction!(train_tabular_policy, m)?)?;
    m.add_function(wrap_pyfunction!(population_eval_returns, m)?)?;
    Ok(())
}
