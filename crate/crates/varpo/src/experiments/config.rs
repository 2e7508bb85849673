//! Experiment configuration and scenario files.
//!
//! The config file is TOML with one section per experiment. Unknown keys are
//! hard errors so a mistyped calibration constant cannot silently fall back
//! to a default. Scenario files are JSON with per-pair records; field names
//! are fixed here: interval records carry `{pair_id, a, b}` and
//! Gaussian/ensemble records carry `{pair_id, r_star, sigma2}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{RewardOracle, TabularEnvironment};
use crate::types::{DiagonalCovariance, RewardVector, SimplexPolicy};

/// Output format of the main report file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Top-level experiment configuration (all fields optional; CLI flags
/// override the file).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub format: Option<ReportFormat>,
    pub out: Option<PathBuf>,
    pub bandit3: Option<Bandit3Config>,
    pub risk: Option<RiskConfig>,
    pub fig_distribution: Option<FigDistributionConfig>,
    pub rlhf_sim: Option<RlhfSimConfig>,
    pub coverage: Option<CoverageConfig>,
    pub stats_report: Option<StatsReportConfig>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::invalid(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if let Some(0) = self.trials {
            return Err(Error::invalid("trials must be >= 1".to_string()));
        }
        if let Some(r) = &self.risk {
            if let Some(files) = &r.scenario_files {
                for f in files {
                    if !f.exists() {
                        return Err(Error::invalid(format!(
                            "scenario file {} does not exist",
                            f.display()
                        )));
                    }
                }
            }
        }
        if let Some(r) = &self.rlhf_sim {
            if let Some(f) = &r.scenario_file {
                if !f.exists() {
                    return Err(Error::invalid(format!(
                        "scenario file {} does not exist",
                        f.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Three-arm bandit experiment settings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bandit3Config {
    /// True rewards (default: the built-in three-arm data).
    pub r_star: Option<Vec<f64>>,
    /// Noise standard deviations per arm (default: the calibrated scales).
    pub sigma: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    pub bins: Option<usize>,
}

/// Risk experiment settings (scenario list plus Monte Carlo budget).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskConfig {
    pub epsilon: Option<f64>,
    /// Gaussian scenario files; when absent, the built-in suite is used.
    pub scenario_files: Option<Vec<PathBuf>>,
    /// Size of the built-in suite (default 20).
    pub scenario_count: Option<usize>,
}

/// Return-distribution experiment settings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigDistributionConfig {
    pub dimension: Option<usize>,
    pub epsilon: Option<f64>,
    /// Variance sampling ranges, widest first (default [[3,100],[3,10]]).
    pub variance_ranges: Option<Vec<[f64; 2]>>,
    pub bins: Option<usize>,
}

/// Population-study settings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlhfSimConfig {
    /// Environment scenario file; when absent, the built-in synthetic
    /// environment is used.
    pub scenario_file: Option<PathBuf>,
    /// Policies per method (default 80).
    pub population: Option<u32>,
    pub iterations: Option<u32>,
    pub batch_size: Option<u32>,
    pub learning_rate: Option<f64>,
    /// Evaluation prompts per policy (default 512).
    pub eval_prompts: Option<u32>,
    /// Fixed vanilla KL coefficient; when absent it matches the mean reward
    /// variance under the reference policy.
    pub vanilla_kl_coeff: Option<f64>,
    /// Reward-range ceiling for the built-in environment (default 100).
    pub reward_range: Option<f64>,
    /// When set, additionally runs the reward-range sweep over these
    /// ceilings.
    pub reward_ranges: Option<Vec<f64>>,
    /// Population pairs averaged per sweep point (default 10).
    pub sweep_repeats: Option<u32>,
    pub alpha: Option<f64>,
}

/// Coverage experiment settings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub dimension: Option<usize>,
    pub deltas: Option<Vec<f64>>,
    pub r_star: Option<Vec<f64>>,
    pub sigma2: Option<Vec<f64>>,
}

/// Statistical self-test settings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsReportConfig {
    pub alpha: Option<f64>,
}

/// One pair record of a scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, untagged)]
pub enum PairRecord {
    Interval { pair_id: usize, a: f64, b: f64 },
    Gaussian { pair_id: usize, r_star: f64, sigma2: f64 },
}

impl PairRecord {
    fn pair_id(&self) -> usize {
        match self {
            PairRecord::Interval { pair_id, .. } | PairRecord::Gaussian { pair_id, .. } => {
                *pair_id
            }
        }
    }
}

/// A tabular environment serialized as per-pair records.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub num_prompts: usize,
    pub num_responses: usize,
    /// Defaults to uniform.
    pub prompt_distribution: Option<Vec<f64>>,
    /// Reward-range ceiling for interval records (default 100).
    pub range_max: Option<f64>,
    pub pairs: Vec<PairRecord>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::invalid(format!("cannot read scenario {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("scenario {}: {e}", path.display())))
    }

    /// Orders the records by `pair_id` and checks that ids cover the grid
    /// exactly once and that all records use the same oracle kind.
    fn ordered_pairs(&self) -> Result<Vec<&PairRecord>> {
        let n = self.num_prompts * self.num_responses;
        if self.pairs.len() != n {
            return Err(Error::invalid(format!(
                "scenario has {} pair records, grid needs {n}",
                self.pairs.len()
            )));
        }
        let mut slots: Vec<Option<&PairRecord>> = vec![None; n];
        for rec in &self.pairs {
            let id = rec.pair_id();
            if id >= n {
                return Err(Error::invalid(format!("pair_id {id} out of range (n = {n})")));
            }
            if slots[id].is_some() {
                return Err(Error::invalid(format!("duplicate pair_id {id}")));
            }
            slots[id] = Some(rec);
        }
        let ordered: Vec<&PairRecord> = slots.into_iter().map(|s| s.unwrap()).collect();
        let interval_count = ordered
            .iter()
            .filter(|r| matches!(r, PairRecord::Interval { .. }))
            .count();
        if interval_count != 0 && interval_count != n {
            return Err(Error::invalid(
                "scenario mixes interval and gaussian pair records".to_string(),
            ));
        }
        Ok(ordered)
    }

    pub fn to_environment(&self) -> Result<TabularEnvironment> {
        let ordered = self.ordered_pairs()?;
        let rho = match &self.prompt_distribution {
            Some(p) => SimplexPolicy::new(p.clone())?,
            None => SimplexPolicy::uniform(self.num_prompts)?,
        };
        let oracle = if matches!(ordered[0], PairRecord::Interval { .. }) {
            let mut lower = Vec::with_capacity(ordered.len());
            let mut upper = Vec::with_capacity(ordered.len());
            for rec in &ordered {
                match rec {
                    PairRecord::Interval { a, b, .. } => {
                        lower.push(*a);
                        upper.push(*b);
                    }
                    PairRecord::Gaussian { .. } => unreachable!("homogeneity checked"),
                }
            }
            RewardOracle::Interval { lower, upper, range_max: self.range_max.unwrap_or(100.0) }
        } else {
            let mut r_star = Vec::with_capacity(ordered.len());
            let mut sigma2 = Vec::with_capacity(ordered.len());
            for rec in &ordered {
                match rec {
                    PairRecord::Gaussian { r_star: r, sigma2: s, .. } => {
                        r_star.push(*r);
                        sigma2.push(*s);
                    }
                    PairRecord::Interval { .. } => unreachable!("homogeneity checked"),
                }
            }
            RewardOracle::Ensemble { r_star, sigma2 }
        };
        TabularEnvironment::new(self.num_prompts, self.num_responses, rho, oracle)
    }

    /// Flattens a Gaussian scenario into a risk-analysis pair.
    pub fn to_gaussian_vectors(&self) -> Result<(RewardVector, DiagonalCovariance)> {
        let ordered = self.ordered_pairs()?;
        let mut r_star = Vec::with_capacity(ordered.len());
        let mut sigma2 = Vec::with_capacity(ordered.len());
        for rec in &ordered {
            match rec {
                PairRecord::Gaussian { r_star: r, sigma2: s, .. } => {
                    r_star.push(*r);
                    sigma2.push(*s);
                }
                PairRecord::Interval { a, b, .. } => {
                    r_star.push(0.5 * (a + b));
                    let w = b - a;
                    sigma2.push(w * w / 12.0);
                }
            }
        }
        Ok((RewardVector::new(r_star)?, DiagonalCovariance::new(sigma2)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_config_keys_are_hard_errors() {
        let err = toml::from_str::<ExperimentConfig>("noise_level = 3\n");
        assert!(err.is_err());
        let err = toml::from_str::<ExperimentConfig>("[bandit3]\nepsilonn = 0.01\n");
        assert!(err.is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let text = "seed = 7\ntrials = 100\nformat = \"json\"\n[bandit3]\nepsilon = 0.02\n";
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.format, Some(ReportFormat::Json));
        assert_eq!(cfg.bandit3.unwrap().epsilon, Some(0.02));
    }

    #[test]
    fn scenario_parses_both_record_kinds() {
        let interval = r#"{
            "num_prompts": 1, "num_responses": 2,
            "pairs": [
                {"pair_id": 1, "a": 40.0, "b": 60.0},
                {"pair_id": 0, "a": 1.0, "b": 100.0}
            ]
        }"#;
        let s: ScenarioFile = serde_json::from_str(interval).unwrap();
        let env = s.to_environment().unwrap();
        assert_eq!(env.true_reward(0, 0).unwrap(), 50.5);
        assert_eq!(env.true_reward(0, 1).unwrap(), 50.0);

        let gaussian = r#"{
            "num_prompts": 1, "num_responses": 3,
            "pairs": [
                {"pair_id": 0, "r_star": 1.0, "sigma2": 2.25},
                {"pair_id": 1, "r_star": 1.8, "sigma2": 0.16},
                {"pair_id": 2, "r_star": 1.65, "sigma2": 0.09}
            ]
        }"#;
        let s: ScenarioFile = serde_json::from_str(gaussian).unwrap();
        let (r, sigma) = s.to_gaussian_vectors().unwrap();
        assert_eq!(r.values(), &[1.0, 1.8, 1.65]);
        assert_eq!(sigma.variances(), &[2.25, 0.16, 0.09]);
    }

    #[test]
    fn scenario_rejects_mixed_duplicate_and_missing_ids() {
        let mixed = r#"{
            "num_prompts": 1, "num_responses": 2,
            "pairs": [
                {"pair_id": 0, "a": 40.0, "b": 60.0},
                {"pair_id": 1, "r_star": 1.0, "sigma2": 1.0}
            ]
        }"#;
        assert!(serde_json::from_str::<ScenarioFile>(mixed).unwrap().to_environment().is_err());

        let dup = r#"{
            "num_prompts": 1, "num_responses": 2,
            "pairs": [
                {"pair_id": 0, "a": 40.0, "b": 60.0},
                {"pair_id": 0, "a": 30.0, "b": 70.0}
            ]
        }"#;
        assert!(serde_json::from_str::<ScenarioFile>(dup).unwrap().to_environment().is_err());

        let short = r#"{
            "num_prompts": 1, "num_responses": 2,
            "pairs": [ {"pair_id": 0, "a": 40.0, "b": 60.0} ]
        }"#;
        assert!(serde_json::from_str::<ScenarioFile>(short).unwrap().to_environment().is_err());
    }
}
