//! Evaluation statistics over per-game score matrices: normalization,
//! interquartile mean, optimality gap, median/mean, stratified bootstrap
//! intervals and performance profiles, plus readers for score files and the
//! published per-game table.

mod bootstrap;
mod error;
pub mod io;
mod matrix;
mod report;
mod stats;

pub use bootstrap::{stratified_bootstrap_ci, BootstrapConfig, Interval};
pub use error::{MetricsError, Result};
pub use matrix::{GameScores, ScoreMatrix};
pub use report::{aggregate, AggregateReport, Estimate, PROFILE_STEP, PROFILE_TAU_MAX};
pub use stats::{iqm, mean, median, normalize, optimality_gap, profile, trimmed_mean, Statistic};
