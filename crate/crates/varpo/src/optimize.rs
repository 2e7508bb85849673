//! Closed-form trust-region policy solvers and related policy utilities.
//!
//! Both solvers maximize the linear objective `r_hat' pi` over a ball around
//! the reference policy; the maximum sits on the boundary, so the solution is
//! the reference plus a scaled step along the (possibly inverse-variance
//! weighted) estimate direction:
//!
//! * unweighted ball `||pi - pi0||^2 <= eps`:
//!   `pi = pi0 + sqrt(eps / r'r) r`
//! * variance-weighted ball `||pi - pi0||_Sigma^2 <= eps_tilde`:
//!   `pi = pi0 + sqrt(eps_tilde / r' Sigma^-1 r) Sigma^-1 r`
//!
//! Solutions are *not* projected onto the simplex by default; the analytic
//! risk formulas in [`crate::risk`] apply to the unprojected forms, and
//! projection is an explicit opt-in via [`project_to_simplex`].

use crate::error::{ensure_len, Error, Result};
use crate::types::{
    DiagonalCovariance, PolicyWeights, RawPolicy, RewardVector, SimplexPolicy, TrustRegion,
    BOUNDARY_REL_TOL,
};

/// A boundary solution of a trust-region problem.
#[derive(Debug, Clone)]
pub struct ClosedFormSolution {
    /// The solved policy (unprojected; may leave the simplex).
    pub policy: RawPolicy,
    /// Lagrange multiplier of the constraint.
    pub beta: f64,
    /// Scalar multiplying the step direction.
    pub step_scale: f64,
    /// Achieved squared constraint norm; equals the requested budget up to
    /// [`BOUNDARY_REL_TOL`].
    pub constraint_value: f64,
}

impl ClosedFormSolution {
    /// The realized trust region: achieved budget plus its multiplier.
    pub fn trust_region(&self) -> Result<TrustRegion> {
        TrustRegion::new(self.constraint_value, self.beta)
    }
}

fn check_budget(epsilon: f64, what: &str) -> Result<()> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::domain(format!("{what} must be finite and > 0, got {epsilon}")));
    }
    Ok(())
}

fn finish_solution(
    pi0: &RawPolicy,
    direction: &[f64],
    quad: f64,
    budget: f64,
) -> Result<ClosedFormSolution> {
    if quad == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let step_scale = (budget / quad).sqrt();
    let beta = 0.5 * (quad / budget).sqrt();
    let weights: Vec<f64> = pi0
        .weights()
        .iter()
        .zip(direction)
        .map(|(p, d)| p + step_scale * d)
        .collect();
    let constraint_value = step_scale * step_scale * quad;
    if !constraint_value.is_finite()
        || (constraint_value - budget).abs() > BOUNDARY_REL_TOL * budget
    {
        return Err(Error::domain(format!(
            "solution left the constraint boundary: achieved {constraint_value}, budget {budget}"
        )));
    }
    Ok(ClosedFormSolution { policy: RawPolicy::new(weights)?, beta, step_scale, constraint_value })
}

/// Maximizes `r_hat' pi` subject to `||pi - pi0||^2 <= epsilon`.
pub fn solve_vanilla(
    pi0: &RawPolicy,
    r_hat: &RewardVector,
    epsilon: f64,
) -> Result<ClosedFormSolution> {
    ensure_len(pi0.len(), r_hat.len())?;
    check_budget(epsilon, "epsilon")?;
    let quad = r_hat.squared_norm();
    finish_solution(pi0, r_hat.values(), quad, epsilon)
}

/// Maximizes `r_hat' pi` subject to `||pi - pi0||_Sigma^2 <= epsilon_tilde`.
pub fn solve_variance_aware(
    pi0: &RawPolicy,
    r_hat: &RewardVector,
    sigma: &DiagonalCovariance,
    epsilon_tilde: f64,
) -> Result<ClosedFormSolution> {
    ensure_len(pi0.len(), r_hat.len())?;
    ensure_len(pi0.len(), sigma.len())?;
    check_budget(epsilon_tilde, "epsilon_tilde")?;
    let direction: Vec<f64> = r_hat
        .values()
        .iter()
        .zip(sigma.variances())
        .map(|(r, v)| r / v)
        .collect();
    let quad: f64 = r_hat.values().iter().zip(&direction).map(|(r, d)| r * d).sum();
    finish_solution(pi0, &direction, quad, epsilon_tilde)
}

/// Budget scaling that aligns the weighted ball with the unweighted one:
/// `epsilon_tilde = lambda_min(Sigma) * epsilon`.
pub fn scale_epsilon(sigma: &DiagonalCovariance, epsilon: f64) -> f64 {
    sigma.lambda_min() * epsilon
}

/// The penalized objective `r_hat' d - beta * ||d||_Sigma`.
pub fn surrogate_objective(
    d: &[f64],
    r_hat: &RewardVector,
    sigma: &DiagonalCovariance,
    beta: f64,
) -> Result<f64> {
    ensure_len(r_hat.len(), d.len())?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::domain(format!("beta must be >= 0, got {beta}")));
    }
    let inner: f64 = r_hat.values().iter().zip(d).map(|(r, x)| r * x).sum();
    Ok(inner - beta * sigma.weighted_norm(d)?)
}

/// Reweights a reference distribution by `exp(r_hat / (beta * sigma2))` and
/// renormalizes. Computed in log-space with max subtraction, so finite
/// inputs never overflow.
pub fn exp_tilt_policy(
    pi0: &SimplexPolicy,
    r_hat: &[f64],
    sigma2: &[f64],
    beta: f64,
) -> Result<SimplexPolicy> {
    ensure_len(pi0.len(), r_hat.len())?;
    ensure_len(pi0.len(), sigma2.len())?;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::domain(format!("beta must be > 0, got {beta}")));
    }
    for &v in sigma2 {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::domain(format!("variances must be > 0, got {v}")));
        }
    }
    let logits: Vec<f64> = pi0
        .probabilities()
        .iter()
        .zip(r_hat.iter().zip(sigma2))
        .map(|(&p, (&r, &v))| {
            if p == 0.0 {
                f64::NEG_INFINITY
            } else {
                p.ln() + r / (beta * v)
            }
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|t| (t - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    SimplexPolicy::new(weights.into_iter().map(|w| w / sum).collect())
}

/// Clamps negative weights to zero and renormalizes. Inputs that already
/// form a valid simplex are returned unchanged.
pub fn project_to_simplex(raw: &RawPolicy) -> Result<SimplexPolicy> {
    if let Ok(valid) = SimplexPolicy::new(raw.weights().to_vec()) {
        return Ok(valid);
    }
    let clamped: Vec<f64> = raw.weights().iter().map(|w| w.max(0.0)).collect();
    let sum: f64 = clamped.iter().sum();
    if sum <= 0.0 {
        return Err(Error::DegeneratePolicy);
    }
    SimplexPolicy::new(clamped.into_iter().map(|w| w / sum).collect())
}
