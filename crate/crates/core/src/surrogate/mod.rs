//! Sobol initialization and Gaussian-process regression over the weight simplex.
//!
//! GP inputs are simplex coordinates: the first `n_outcomes - 1` weights.

mod gp;
mod nelder_mead;
mod sobol;

pub use gp::{
    gp_fit, gp_fit_with, GpFitOptions, GpModel, KernelParams, Observation, OutcomeGp, Posterior,
    LENGTHSCALE_BOUNDS, SIGNAL_VARIANCE_BOUNDS,
};
pub use sobol::{cube_to_simplex, sobol_init, sobol_points, MAX_DIMENSIONS};
