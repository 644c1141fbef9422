//! A desk-scale sample-efficient value-based agent.
//!
//! * [`network`]: width-scaled residual encoder, dueling categorical head,
//!   latent transition model and the parameter-space reset / EMA operations.
//! * [`replay`]: ring buffer with a sum tree, variable-horizon multi-step
//!   returns and K-step subsequences.
//! * [`schedules`]: annealed update horizon and discount, reset clock,
//!   exploration and replay-ratio accounting.
//! * [`losses`]: categorical TD loss, latent self-prediction loss and image
//!   augmentation.
//! * [`envs`]: small deterministic pixel games plus sticky actions and frame
//!   stacking.
//! * [`trainer`]: configuration, the training loop, evaluation and suites.

pub mod config;
pub mod envs;
mod error;
pub mod kv;
pub mod losses;
pub mod network;
pub mod replay;
pub mod rng;
pub mod schedules;
pub mod trainer;

pub use error::{Error, Result};
