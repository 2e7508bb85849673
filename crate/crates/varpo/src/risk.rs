//! Underperformance-risk analysis.
//!
//! The underperformance event is `pi' r* <= pi0' r*` (non-strict). For the
//! unprojected closed-form policies the event reduces to the sign of a
//! Gaussian inner product, which gives the analytic probabilities
//!
//! * unweighted:        `Phi( -||r*||^2 / sqrt(r*' Sigma r*) )`
//! * variance-weighted: `Phi( -sqrt(r*' Sigma^-1 r*) )`
//!
//! Monte Carlo estimation re-solves both closed forms per sampled estimate
//! and counts the events directly, so it also covers the simplex-projected
//! variants where the analytic formulas no longer apply.

use crate::error::{ensure_len, Error, Result};
use crate::optimize::{project_to_simplex, scale_epsilon, solve_vanilla, solve_variance_aware};
use crate::reward::GaussianRewardModel;
use crate::rng::{lane, StreamRng};
use crate::stats::normal_cdf;
use crate::types::{DiagonalCovariance, PolicyWeights, RawPolicy, RewardVector};

/// Analytic and Monte Carlo underperformance probabilities. Analytic fields
/// are absent when the estimates were projected onto the simplex.
#[derive(Debug, Clone)]
pub struct RiskReport {
    pub analytic_vanilla: Option<f64>,
    pub analytic_variance_aware: Option<f64>,
    pub mc_vanilla: f64,
    pub mc_variance_aware: f64,
    pub mc_trials: u64,
    pub mc_std_error_vanilla: f64,
    pub mc_std_error_va: f64,
    /// Trials whose sampled estimate was exactly zero (excluded from counts).
    pub degenerate_trials: u64,
}

/// Empirical coverage of the self-normalized noise bound
/// `||R_hat - r*||_{Sigma^-1} <= sqrt(n ln(1/delta))`.
#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub delta: f64,
    pub threshold: f64,
    pub empirical_coverage: f64,
    pub trials: u64,
    /// Whether the empirical coverage reached `1 - delta`.
    pub passed: bool,
}

/// Confidence parameterization for the coverage check. The two forms are
/// related by `delta = exp(-n / beta^2)`.
#[derive(Debug, Clone, Copy)]
pub enum ConfidenceParam {
    Delta(f64),
    Beta(f64),
}

impl ConfidenceParam {
    fn delta(self, n: usize) -> Result<f64> {
        let delta = match self {
            ConfidenceParam::Delta(d) => d,
            ConfidenceParam::Beta(b) => {
                if !(b.is_finite() && b > 0.0) {
                    return Err(Error::domain(format!("beta must be > 0, got {b}")));
                }
                (-(n as f64) / (b * b)).exp()
            }
        };
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(delta)
    }
}

/// Expected return `pi' r*` of a policy in either representation.
pub fn return_of<P: PolicyWeights>(policy: &P, r_star: &RewardVector) -> Result<f64> {
    let w = policy.weights();
    ensure_len(r_star.len(), w.len())?;
    Ok(w.iter().zip(r_star.values()).map(|(a, b)| a * b).sum())
}

fn check_nonzero(r_star: &RewardVector) -> Result<()> {
    if r_star.squared_norm() == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    Ok(())
}

/// `Phi( -||r*||^2 / sqrt(r*' Sigma r*) )`.
pub fn analytic_risk_vanilla(r_star: &RewardVector, sigma: &DiagonalCovariance) -> Result<f64> {
    ensure_len(r_star.len(), sigma.len())?;
    check_nonzero(r_star)?;
    let nrm2 = r_star.squared_norm();
    let weighted = sigma.weighted_norm(r_star.values())?;
    Ok(normal_cdf(-nrm2 / weighted))
}

/// `Phi( -sqrt(r*' Sigma^-1 r*) )`.
pub fn analytic_risk_variance_aware(
    r_star: &RewardVector,
    sigma: &DiagonalCovariance,
) -> Result<f64> {
    ensure_len(r_star.len(), sigma.len())?;
    check_nonzero(r_star)?;
    Ok(normal_cdf(-sigma.inverse_weighted_norm(r_star.values())?))
}

/// Per-trial returns of both closed-form policies under fresh noisy
/// estimates, used for risk counting and for return histograms.
#[derive(Debug, Clone)]
pub struct PolicyReturnSamples {
    pub vanilla: Vec<f64>,
    pub variance_aware: Vec<f64>,
    pub reference_return: f64,
    pub degenerate_trials: u64,
}

/// Draws `trials` estimates `R_hat ~ N(r*, Sigma)`, solves both closed forms
/// per draw (budgets `epsilon` and `lambda_min * epsilon`), and records the
/// true return of each solution. Trials are seeded independently by index,
/// so any execution order reproduces the same samples.
pub fn sample_policy_returns(
    r_star: &RewardVector,
    sigma: &DiagonalCovariance,
    pi0: &RawPolicy,
    epsilon: f64,
    trials: u64,
    seed: u64,
    project: bool,
) -> Result<PolicyReturnSamples> {
    ensure_len(r_star.len(), pi0.len())?;
    if trials < 1 {
        return Err(Error::invalid("need at least one trial".to_string()));
    }
    let model = GaussianRewardModel::new(r_star.clone(), sigma.clone())?;
    let eps_tilde = scale_epsilon(sigma, epsilon);
    let mut vanilla = Vec::with_capacity(trials as usize);
    let mut variance_aware = Vec::with_capacity(trials as usize);
    let mut degenerate = 0u64;
    for t in 0..trials {
        let mut rng = StreamRng::derive(seed, &[lane::TRIAL, t]);
        let estimate = model.sample_noisy_reward(&mut rng);
        let sol_v = match solve_vanilla(pi0, &estimate, epsilon) {
            Ok(s) => s,
            Err(Error::DegenerateDirection) => {
                degenerate += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let sol_a = solve_variance_aware(pi0, &estimate, sigma, eps_tilde)?;
        if project {
            vanilla.push(return_of(&project_to_simplex(&sol_v.policy)?, r_star)?);
            variance_aware.push(return_of(&project_to_simplex(&sol_a.policy)?, r_star)?);
        } else {
            vanilla.push(return_of(&sol_v.policy, r_star)?);
            variance_aware.push(return_of(&sol_a.policy, r_star)?);
        }
    }
    Ok(PolicyReturnSamples {
        vanilla,
        variance_aware,
        reference_return: return_of(pi0, r_star)?,
        degenerate_trials: degenerate,
    })
}

fn binomial_se(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}

fn risk_report(samples: &PolicyReturnSamples, analytic: Option<(f64, f64)>) -> RiskReport {
    let n = samples.vanilla.len() as f64;
    let count = |returns: &[f64]| {
        returns.iter().filter(|&&r| r <= samples.reference_return).count() as f64
    };
    let p_v = count(&samples.vanilla) / n;
    let p_a = count(&samples.variance_aware) / n;
    RiskReport {
        analytic_vanilla: analytic.map(|(v, _)| v),
        analytic_variance_aware: analytic.map(|(_, a)| a),
        mc_vanilla: p_v,
        mc_variance_aware: p_a,
        mc_trials: n as u64,
        mc_std_error_vanilla: binomial_se(p_v, n),
        mc_std_error_va: binomial_se(p_a, n),
        degenerate_trials: samples.degenerate_trials,
    }
}

/// Monte Carlo risk estimate on the unprojected closed forms, reported next
/// to the analytic probabilities.
pub fn monte_carlo_risk(
    r_star: &RewardVector,
    sigma: &DiagonalCovariance,
    pi0: &RawPolicy,
    epsilon: f64,
    trials: u64,
    seed: u64,
) -> Result<RiskReport> {
    let samples = sample_policy_returns(r_star, sigma, pi0, epsilon, trials, seed, false)?;
    let analytic = (
        analytic_risk_vanilla(r_star, sigma)?,
        analytic_risk_variance_aware(r_star, sigma)?,
    );
    Ok(risk_report(&samples, Some(analytic)))
}

/// Monte Carlo risk estimate with both policies projected onto the simplex.
/// The analytic formulas do not apply here, so the report leaves them unset.
pub fn monte_carlo_risk_projected(
    r_star: &RewardVector,
    sigma: &DiagonalCovariance,
    pi0: &RawPolicy,
    epsilon: f64,
    trials: u64,
    seed: u64,
) -> Result<RiskReport> {
    let samples = sample_policy_returns(r_star, sigma, pi0, epsilon, trials, seed, true)?;
    Ok(risk_report(&samples, None))
}

/// Estimates how often `||R_hat - r*||_{Sigma^-1}` stays under
/// `sqrt(n ln(1/delta))` and checks the frequency against `1 - delta`.
pub fn self_normalized_coverage(
    r_star: &RewardVector,
    sigma: &DiagonalCovariance,
    level: ConfidenceParam,
    trials: u64,
    seed: u64,
) -> Result<CoverageReport> {
    if trials < 1 {
        return Err(Error::invalid("need at least one trial".to_string()));
    }
    let n = r_star.len();
    let delta = level.delta(n)?;
    let threshold = ((n as f64) * (1.0 / delta).ln()).sqrt();
    let model = GaussianRewardModel::new(r_star.clone(), sigma.clone())?;
    let mut hits = 0u64;
    for t in 0..trials {
        let mut rng = StreamRng::derive(seed, &[lane::TRIAL, t]);
        let estimate = model.sample_noisy_reward(&mut rng);
        let diff: Vec<f64> = estimate
            .values()
            .iter()
            .zip(r_star.values())
            .map(|(e, r)| e - r)
            .collect();
        if sigma.inverse_weighted_norm(&diff)? <= threshold {
            hits += 1;
        }
    }
    let empirical_coverage = hits as f64 / trials as f64;
    Ok(CoverageReport {
        delta,
        threshold,
        empirical_coverage,
        trials,
        passed: empirical_coverage >= 1.0 - delta,
    })
}
