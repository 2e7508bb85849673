//! Reward oracles.
//!
//! Two observation models are supported: Gaussian perturbations of a fixed
//! true-reward vector (with per-pair variances), and interval observations
//! `[a, b]` from which rewards are drawn uniformly. For intervals the true
//! reward is the midpoint and the variance is `(b - a)^2 / 12`; for Gaussian
//! models an ensemble of member draws provides the mean estimate and the
//! unbiased sample variance.

use crate::error::{ensure_len, Error, Result};
use crate::rng::StreamRng;
use crate::types::{DiagonalCovariance, RewardVector};

/// A true reward vector together with the diagonal covariance of the
/// observation noise.
#[derive(Debug, Clone)]
pub struct GaussianRewardModel {
    true_reward: RewardVector,
    covariance: DiagonalCovariance,
}

impl GaussianRewardModel {
    pub fn new(true_reward: RewardVector, covariance: DiagonalCovariance) -> Result<Self> {
        ensure_len(true_reward.len(), covariance.len())?;
        Ok(Self { true_reward, covariance })
    }

    pub fn len(&self) -> usize {
        self.true_reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_reward.is_empty()
    }

    pub fn true_reward(&self) -> &RewardVector {
        &self.true_reward
    }

    pub fn covariance(&self) -> &DiagonalCovariance {
        &self.covariance
    }

    /// One noisy observation of the full reward vector: entry `i` is drawn
    /// from Normal(r*_i, sigma2_i), independently across entries.
    pub fn sample_noisy_reward(&self, rng: &mut StreamRng) -> RewardVector {
        let values = self
            .true_reward
            .values()
            .iter()
            .zip(self.covariance.variances())
            .map(|(&r, &v)| rng.normal(r, v.sqrt()))
            .collect();
        RewardVector::new(values).expect("sampled vector keeps the model's valid shape")
    }

    /// `k` independent member draws for the pair at `index`, summarized as an
    /// ensemble estimate.
    pub fn ensemble_estimate(
        &self,
        index: usize,
        k: usize,
        rng: &mut StreamRng,
    ) -> Result<EnsembleEstimate> {
        if index >= self.len() {
            return Err(Error::invalid(format!(
                "pair index {index} out of range for n = {}",
                self.len()
            )));
        }
        if k < 2 {
            return Err(Error::invalid(format!("ensemble needs k >= 2 members, got {k}")));
        }
        let mean = self.true_reward.values()[index];
        let sd = self.covariance.variances()[index].sqrt();
        let samples: Vec<f64> = (0..k).map(|_| rng.normal(mean, sd)).collect();
        Ok(EnsembleEstimate::from_samples(samples))
    }
}

/// An interval observation `[a, b]` constrained to `1 <= a < b <= R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalObservation {
    lower: f64,
    upper: f64,
    range_max: f64,
}

impl IntervalObservation {
    pub fn new(lower: f64, upper: f64, range_max: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && range_max.is_finite()) {
            return Err(Error::domain("interval bounds must be finite".to_string()));
        }
        if !(1.0 <= lower && lower < upper && upper <= range_max) {
            return Err(Error::domain(format!(
                "interval must satisfy 1 <= a < b <= R, got a={lower}, b={upper}, R={range_max}"
            )));
        }
        Ok(Self { lower, upper, range_max })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn range_max(&self) -> f64 {
        self.range_max
    }

    /// One reward draw, uniform over `[a, b)`.
    pub fn sample_reward(&self, rng: &mut StreamRng) -> f64 {
        rng.uniform(self.lower, self.upper)
    }

    /// Variance of the uniform draw: `(b - a)^2 / 12`.
    pub fn variance(&self) -> f64 {
        let w = self.upper - self.lower;
        w * w / 12.0
    }

    /// The midpoint `(a + b) / 2`, used as the true reward.
    pub fn true_reward(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Member rewards of an ensemble observation plus their mean and unbiased
/// sample variance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    samples: Vec<f64>,
    mean: f64,
    sample_variance: f64,
}

impl EnsembleEstimate {
    /// Summarizes raw member draws. Requires k >= 2.
    pub fn from_samples(samples: Vec<f64>) -> Self {
        assert!(samples.len() >= 2, "ensemble needs at least two members");
        let k = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / k;
        let sample_variance =
            samples.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (k - 1.0);
        Self { samples, mean, sample_variance }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sample_variance(&self) -> f64 {
        self.sample_variance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::lane;

    fn model(r: Vec<f64>, v: Vec<f64>) -> GaussianRewardModel {
        GaussianRewardModel::new(
            RewardVector::new(r).unwrap(),
            DiagonalCovariance::new(v).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn vanishing_noise_returns_true_reward() {
        let m = model(vec![1.0, -2.0, 3.5], vec![1e-300, 1e-300, 1e-300]);
        let mut rng = StreamRng::derive(0, &[]);
        let r = m.sample_noisy_reward(&mut rng);
        for (got, want) in r.values().iter().zip([1.0, -2.0, 3.5]) {
            assert!((got - want).abs() < 1e-140);
        }
    }

    #[test]
    fn noisy_reward_empirical_moments() {
        let m = model(vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]);
        let trials = 100_000;
        let mut sums = [0.0f64; 3];
        let mut sumsq = [0.0f64; 3];
        for t in 0..trials {
            let mut rng = StreamRng::derive(11, &[lane::TRIAL, t]);
            let r = m.sample_noisy_reward(&mut rng);
            for (i, v) in r.values().iter().enumerate() {
                sums[i] += v;
                sumsq[i] += v * v;
            }
        }
        for i in 0..3 {
            let mean = sums[i] / trials as f64;
            let var = sumsq[i] / trials as f64 - mean * mean;
            assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn fixed_seed_reproduces_bitwise() {
        let m = model(vec![0.3, 0.7], vec![2.0, 0.5]);
        let mut a = StreamRng::derive(99, &[lane::TRIAL, 3]);
        let mut b = StreamRng::derive(99, &[lane::TRIAL, 3]);
        assert_eq!(m.sample_noisy_reward(&mut a).values(), m.sample_noisy_reward(&mut b).values());
    }

    #[test]
    fn interval_degenerate_width() {
        let obs = IntervalObservation::new(50.0, 50.0 + 1e-12, 100.0).unwrap();
        let mut rng = StreamRng::derive(0, &[]);
        assert!((obs.sample_reward(&mut rng) - 50.0).abs() < 1e-11);
        assert!(obs.variance() < 1e-24);
    }

    #[test]
    fn interval_moment_oracle() {
        let obs = IntervalObservation::new(1.0, 100.0, 100.0).unwrap();
        let trials = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for t in 0..trials {
            let mut rng = StreamRng::derive(5, &[lane::TRIAL, t]);
            let x = obs.sample_reward(&mut rng);
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / trials as f64;
        let var = sumsq / trials as f64 - mean * mean;
        assert!((mean - 50.5).abs() < 0.5, "mean {mean}");
        // empirical variance within 3 standard errors of (b-a)^2/12;
        // Var(X^2-ish) for uniform gives SE ~ var * sqrt(4/5/n)
        let se = obs.variance() * (4.0 / 5.0 / trials as f64).sqrt();
        assert!((var - obs.variance()).abs() < 3.0 * se, "var {var} vs {}", obs.variance());
    }

    #[test]
    fn interval_formulas() {
        let obs = IntervalObservation::new(1.0, 100.0, 100.0).unwrap();
        assert!((obs.variance() - 816.75).abs() < 1e-12);
        assert!((obs.true_reward() - 50.5).abs() < 1e-12);
        let obs = IntervalObservation::new(40.0, 60.0, 100.0).unwrap();
        assert!((obs.variance() - 400.0 / 12.0).abs() < 1e-12);
        assert!((obs.true_reward() - 50.0).abs() < 1e-12);
        let obs = IntervalObservation::new(1.6, 2.4, 100.0).unwrap();
        assert!((obs.true_reward() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn interval_rejects_bad_bounds() {
        assert!(IntervalObservation::new(0.5, 2.0, 100.0).is_err());
        assert!(IntervalObservation::new(3.0, 3.0, 100.0).is_err());
        assert!(IntervalObservation::new(5.0, 101.0, 100.0).is_err());
    }

    #[test]
    fn ensemble_needs_two_members_and_valid_index() {
        let m = model(vec![1.0], vec![4.0]);
        let mut rng = StreamRng::derive(0, &[]);
        assert!(m.ensemble_estimate(0, 1, &mut rng).is_err());
        assert!(m.ensemble_estimate(1, 5, &mut rng).is_err());
    }

    #[test]
    fn degenerate_variance_collapses_members() {
        let m = model(vec![2.0], vec![1e-300]);
        let mut rng = StreamRng::derive(0, &[]);
        let e = m.ensemble_estimate(0, 2, &mut rng).unwrap();
        assert!(e.sample_variance() < 1e-150);
        assert!((e.mean() - 2.0).abs() < 1e-140);
    }

    #[test]
    fn sample_variance_is_unbiased() {
        // sigma2 = 4, k = 10: averaged over 1e4 repetitions the mean sample
        // variance lands within 3 standard errors of 4 (SE = sigma2 *
        // sqrt(2/(k-1)) / sqrt(reps)).
        let m = model(vec![0.0], vec![4.0]);
        let reps = 10_000;
        let k = 10;
        let mut acc = 0.0;
        for t in 0..reps {
            let mut rng = StreamRng::derive(21, &[lane::TRIAL, t]);
            acc += m.ensemble_estimate(0, k, &mut rng).unwrap().sample_variance();
        }
        let mean_var = acc / reps as f64;
        let se = 4.0 * (2.0 / (k as f64 - 1.0)).sqrt() / (reps as f64).sqrt();
        assert!((mean_var - 4.0).abs() < 3.0 * se, "mean var {mean_var}, band {}", 3.0 * se);
        assert!((mean_var - 4.0).abs() < 0.15);
    }

    #[test]
    fn ensemble_mean_variance_shrinks_with_k() {
        let m = model(vec![0.0], vec![4.0]);
        let reps = 10_000;
        let k = 10;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for t in 0..reps {
            let mut rng = StreamRng::derive(33, &[lane::TRIAL, t]);
            let e = m.ensemble_estimate(0, k, &mut rng).unwrap();
            sum += e.mean();
            sumsq += e.mean() * e.mean();
        }
        let mean = sum / reps as f64;
        let var = sumsq / reps as f64 - mean * mean;
        let expected = 4.0 / k as f64;
        let se = expected * (2.0f64).sqrt() / (reps as f64).sqrt();
        assert!((var - expected).abs() < 3.0 * se, "var of mean {var} vs {expected}");
    }

    #[test]
    fn ensemble_summary_matches_members() {
        let e = EnsembleEstimate::from_samples(vec![1.0, 2.0, 3.0]);
        assert!((e.mean() - 2.0).abs() < 1e-12);
        assert!((e.sample_variance() - 1.0).abs() < 1e-12);
    }
}
