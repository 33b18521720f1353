//! Multi-objective policy learning.
//!
//! Learns depth-limited treatment-allocation trees from doubly-robust scores
//! and maps the Pareto frontier of trade-offs between several outcomes with a
//! Gaussian-process surrogate and a Monte-Carlo noisy expected hypervolume
//! improvement acquisition.
//!
//! The pipeline, bottom up:
//!
//! - [`data`]: datasets, nuisance estimates, AIPW scores, synthetic DGPs.
//! - [`policytree`]: greedy, hybrid and exact tree fitters and value functionals.
//! - [`pareto`]: weight vectors, dominance, Pareto sets and hypervolume.
//! - [`surrogate`]: Sobol initialization and per-outcome GP regression.
//! - [`acquisition`]: NEHVI scoring and candidate proposal.
//! - [`driver`]: the optimization loop, bootstrap standard errors and final fits.

pub mod acquisition;
pub mod data;
pub mod driver;
mod error;
pub mod pareto;
pub mod policytree;
pub mod rng;
pub mod surrogate;

pub use error::{MopolError, Result};
