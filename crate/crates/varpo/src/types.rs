//! Foundational numeric types and the weighted linear algebra shared by the
//! rest of the crate.
//!
//! Rewards and policies live in the flattened (prompt, response) space of
//! dimension `n = |X|*|Y|`. The covariance of the reward noise is diagonal
//! throughout, which keeps every operation here O(n).
//!
//! All types are immutable values after construction and all operations are
//! pure functions, so they can be shared freely across threads.

use crate::error::{ensure_len, Error, Result};

/// Absolute tolerance for algebraic identities (norm collapses, simplex sums).
pub const ALGEBRAIC_ABS_TOL: f64 = 1e-12;

/// Absolute tolerance on the sum of a validated probability vector.
pub const SIMPLEX_SUM_ABS_TOL: f64 = 1e-12;

/// Relative tolerance for "the solution sits on the constraint boundary".
pub const BOUNDARY_REL_TOL: f64 = 1e-9;

/// Floor applied to sampled reward variances before they are used as
/// regularization weights.
pub const VARIANCE_FLOOR: f64 = 1e-8;

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("{what} contains non-finite entry {v}")));
    }
    Ok(())
}

/// A real vector over the flattened (prompt, response) space. Houses both the
/// true reward `r*` and noisy estimates of it.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector {
    values: Vec<f64>,
}

impl RewardVector {
    /// Validates length >= 1 and finiteness of every entry.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        ensure_finite(&values, "reward vector")?;
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sum of squared entries.
    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Per-pair reward-noise variances forming the diagonal of the covariance
/// matrix. Every entry is strictly positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalCovariance {
    variances: Vec<f64>,
}

impl DiagonalCovariance {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        for &v in &variances {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::domain(format!(
                    "covariance diagonal entries must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(Self { variances })
    }

    /// The identity covariance of dimension `n`.
    pub fn identity(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Smallest diagonal entry. Nonempty by construction.
    pub fn lambda_min(&self) -> f64 {
        self.variances.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Weighted norm `sqrt(d' Sigma d) = sqrt(sum_i sigma2_i d_i^2)`.
    pub fn weighted_norm(&self, d: &[f64]) -> Result<f64> {
        ensure_len(self.len(), d.len())?;
        let s: f64 = d.iter().zip(&self.variances).map(|(x, v)| v * x * x).sum();
        Ok(s.sqrt())
    }

    /// Inverse-weighted norm `sqrt(d' Sigma^-1 d) = sqrt(sum_i d_i^2 / sigma2_i)`.
    pub fn inverse_weighted_norm(&self, d: &[f64]) -> Result<f64> {
        ensure_len(self.len(), d.len())?;
        let s: f64 = d.iter().zip(&self.variances).map(|(x, v)| x * x / v).sum();
        Ok(s.sqrt())
    }
}

/// Access to the flat weight vector of a policy, however it is represented.
pub trait PolicyWeights {
    fn weights(&self) -> &[f64];
}

/// An unconstrained policy vector. The closed-form trust-region solutions
/// impose only norm constraints, so their outputs may leave the simplex;
/// this type makes that explicit.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPolicy {
    weights: Vec<f64>,
}

impl RawPolicy {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        ensure_finite(&weights, "policy weights")?;
        Ok(Self { weights })
    }

    /// Uniform reference policy over `n` entries.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        Ok(Self { weights: vec![1.0 / n as f64; n] })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Pointwise difference `self - other`.
    pub fn diff(&self, other: &RawPolicy) -> Result<Vec<f64>> {
        ensure_len(self.len(), other.len())?;
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| a - b)
            .collect())
    }
}

impl PolicyWeights for RawPolicy {
    fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// A validated probability vector: entries in [0, 1] summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPolicy {
    probabilities: Vec<f64>,
}

impl SimplexPolicy {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        for &p in &probabilities {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!(
                    "simplex entries must lie in [0, 1], got {p}"
                )));
            }
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_ABS_TOL {
            return Err(Error::domain(format!(
                "simplex entries must sum to 1 (got {sum})"
            )));
        }
        Ok(Self { probabilities })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        Ok(Self { probabilities: vec![1.0 / n as f64; n] })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

impl PolicyWeights for SimplexPolicy {
    fn weights(&self) -> &[f64] {
        &self.probabilities
    }
}

/// Trust-region parameters: squared-distance budget and penalty multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegion {
    pub epsilon: f64,
    pub beta: f64,
}

impl TrustRegion {
    pub fn new(epsilon: f64, beta: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::domain(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::domain(format!("beta must be > 0, got {beta}")));
        }
        Ok(Self { epsilon, beta })
    }
}
