//! Built-in scenario data: the three-arm example, the default synthetic
//! environment for the population study, and a fixed suite of risk
//! scenarios.

use crate::error::Result;
use crate::rng::{lane, StreamRng};
use crate::sim::{RewardOracle, TabularEnvironment};
use crate::types::{DiagonalCovariance, RewardVector, SimplexPolicy};

/// The three-arm bandit example: a deceptive high estimate on the worst arm
/// with a wide uncertainty bracket, and reliable estimates on the better
/// arms.
pub mod three_arm {
    use super::*;

    /// True rewards of the three arms.
    pub const TRUE_REWARD: [f64; 3] = [1.0, 1.8, 1.65];

    /// Observed estimates (arm 1 spuriously high).
    pub const ESTIMATED_REWARD: [f64; 3] = [3.2, 2.2, 1.35];

    /// Calibrated noise scales: the uncertainty brackets
    /// [0.5, 3.5], [1.6, 2.4], [1.2, 1.8] read as +-1 sigma half-widths.
    /// Overridable through the experiment config.
    pub const SIGMA: [f64; 3] = [1.5, 0.4, 0.3];

    /// Default trust-region budget.
    pub const EPSILON: f64 = 0.01;

    pub fn true_reward_vector() -> RewardVector {
        RewardVector::new(TRUE_REWARD.to_vec()).expect("static data is valid")
    }

    pub fn estimated_reward_vector() -> RewardVector {
        RewardVector::new(ESTIMATED_REWARD.to_vec()).expect("static data is valid")
    }

    pub fn covariance() -> DiagonalCovariance {
        DiagonalCovariance::new(SIGMA.iter().map(|s| s * s).collect())
            .expect("static data is valid")
    }
}

/// Default synthetic environment for the population study, scaled into the
/// reward range `[1, range_max]`.
///
/// Four prompts, five responses. Per prompt the four narrow-interval
/// responses share one midpoint (so mass shuffled among them is
/// return-neutral) while response 0 carries a wide interval whose midpoint
/// sits above the rest for half the prompts and below it for the other half.
/// That layout gives the vanilla method a noisy, high-variance signal to
/// chase while keeping the two methods' achievable mean returns aligned.
pub fn population_env(range_max: f64) -> Result<TabularEnvironment> {
    const PROMPTS: usize = 4;
    const RESPONSES: usize = 5;
    const BASE_MID: f64 = 50.0;
    const DELTA: f64 = 2.0;
    const NARROW_WIDTH: f64 = 4.0;

    let scale = (range_max - 1.0) / 99.0;
    let mut lower = Vec::with_capacity(PROMPTS * RESPONSES);
    let mut upper = Vec::with_capacity(PROMPTS * RESPONSES);
    for x in 0..PROMPTS {
        let mid = 1.0 + (BASE_MID - 1.0) * scale;
        let delta = DELTA * scale;
        let narrow = (NARROW_WIDTH * scale).max(0.5).min(range_max - 1.0);
        for y in 0..RESPONSES {
            let (m, w) = if y == 0 {
                let m = if x < PROMPTS / 2 { mid + delta } else { mid - delta };
                let w = 0.9 * 2.0 * (m - 1.0).min(range_max - m);
                (m, w)
            } else {
                (mid, narrow)
            };
            lower.push(m - 0.5 * w);
            upper.push(m + 0.5 * w);
        }
    }
    TabularEnvironment::new(
        PROMPTS,
        RESPONSES,
        SimplexPolicy::uniform(PROMPTS)?,
        RewardOracle::Interval { lower, upper, range_max },
    )
}

/// Generation seed for the fixed risk-scenario suite. Changing it changes
/// the suite, so it is part of the recorded outputs.
const RISK_SUITE_SEED: u64 = 0x5EED_0001;

/// A deterministic suite of `count` risk scenarios with moderate analytic
/// risks (dimensions 2..=8, variances in [0.5, 9], Gaussian true rewards).
pub fn risk_scenario_suite(count: usize) -> Vec<(String, RewardVector, DiagonalCovariance)> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let mut rng = StreamRng::derive(RISK_SUITE_SEED, &[lane::SCENARIO, i]);
        i += 1;
        let n = 2 + rng.below(7);
        let r: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 1.5)).collect();
        if r.iter().map(|v| v * v).sum::<f64>() == 0.0 {
            continue;
        }
        let sigma2: Vec<f64> = (0..n).map(|_| rng.uniform(0.5, 9.0)).collect();
        out.push((
            format!("scenario{:02}", out.len()),
            RewardVector::new(r).expect("generated data is finite"),
            DiagonalCovariance::new(sigma2).expect("generated data is positive"),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{analytic_risk_vanilla, analytic_risk_variance_aware, return_of};

    #[test]
    fn three_arm_reference_return() {
        let uniform = SimplexPolicy::uniform(3).unwrap();
        let r = three_arm::true_reward_vector();
        assert!((return_of(&uniform, &r).unwrap() - 1.4833333333333334).abs() < 1e-12);
    }

    #[test]
    fn population_env_scales_into_range() {
        for range in [100.0, 50.0, 20.0, 10.0] {
            let env = population_env(range).unwrap();
            match env.oracle() {
                RewardOracle::Interval { lower, upper, range_max } => {
                    assert_eq!(*range_max, range);
                    for (&a, &b) in lower.iter().zip(upper) {
                        assert!(1.0 <= a && a < b && b <= range, "[{a}, {b}] vs {range}");
                    }
                }
                _ => panic!("expected interval oracle"),
            }
        }
    }

    #[test]
    fn risk_suite_is_fixed_and_moderate() {
        let a = risk_scenario_suite(20);
        let b = risk_scenario_suite(20);
        assert_eq!(a.len(), 20);
        for ((name_a, ra, sa), (name_b, rb, _)) in a.iter().zip(&b) {
            assert_eq!(name_a, name_b);
            assert_eq!(ra.values(), rb.values());
            let v = analytic_risk_vanilla(ra, sa).unwrap();
            let w = analytic_risk_variance_aware(ra, sa).unwrap();
            assert!(w <= v);
            assert!(v > 1e-12 && v < 0.5, "vanilla risk {v} out of band for {name_a}");
        }
    }
}
