//! Simulation and optimization toolkit for dynamic assortment selection
//! under a multinomial logit (MNL) demand model with hard inventory
//! constraints.
//!
//! The crate provides:
//!
//! - [`mnl`]: the ground-truth choice model (probabilities, expected
//!   revenue, stochastic customer simulation);
//! - [`estimation`]: epoch-based sampling estimators with upper/lower
//!   confidence bounds on the product utilities;
//! - [`lp`]: a small dense exact LP solver (two-phase simplex, Bland's
//!   rule) that reports duals;
//! - [`diff_assort`]: the difference-of-MNL assortment maximization,
//!   both by exact enumeration and by a guess-grid dynamic program with
//!   a weak approximation guarantee;
//! - [`planner`]: the optimistic per-epoch LP over distributions of
//!   assortments, solved by cutting planes against the diff-assort
//!   separation oracle, plus the clairvoyant fluid benchmark;
//! - [`policy`]: the epoch-based exploration-exploitation run loop and
//!   baseline policies;
//! - [`harness`]: replicated experiments, regret estimation, and
//!   statistical diagnostics;
//! - [`config`]: the JSON experiment configuration document.

pub mod config;
pub mod diff_assort;
pub mod estimation;
pub mod harness;
pub mod lp;
pub mod mnl;
pub mod planner;
pub mod policy;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
