//! Hierarchical reinforcement learning with an MPPI low-level controller.
//!
//! A Gaussian high-level policy proposes `M` candidate actions per step. Each
//! action conditions the cost of an MPPI planner that shares a single set of
//! control perturbations across all candidates. One candidate is executed in the
//! real environment; the remaining plans are re-scored under an approximate
//! model and recycled as virtual PPO training data, mixed with real data by an
//! influence ratio that anneals with value-ensemble uncertainty.

pub mod analysis;
pub mod buffer;
pub mod config;
pub mod envs;
pub mod error;
pub mod fmt;
pub mod mixing;
pub mod mppi;
pub mod nn;
pub mod ppo;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
