//! Experiment runner for branching Brownian motion with selection.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod scenarios;
pub mod sweep;

pub use config::{ConfigFile, ExperimentConfig, Overrides, Scenario};
pub use error::ExpError;

/// `git describe` of the build, or `unknown` outside a checkout.
pub const GIT_DESCRIBE: &str = env!("BRANCHSEL_GIT_DESCRIBE");
