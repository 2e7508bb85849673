//! Variance-aware policy optimization toolkit.
//!
//! The crate models noisy reward observations, solves the vanilla and
//! variance-aware trust-region policy updates in closed form, quantifies the
//! risk of underperforming a reference policy both analytically and by Monte
//! Carlo, simulates the population study of a tabular PPO-style trainer, and
//! ships the statistical tests used to compare the two methods. Everything is
//! driven by deterministic, splittable random streams so experiment outputs
//! are reproducible bit for bit.

pub mod error;
pub mod experiments;
pub mod optimize;
pub mod reward;
pub mod risk;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod types;

pub use error::{Error, Result};
