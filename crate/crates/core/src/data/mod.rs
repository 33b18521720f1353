//! Datasets, nuisance estimates and doubly-robust scores.

mod dataset;
mod scores;
pub mod synth;

pub use dataset::{load_dataset, Dataset, Provenance, Role, Schema};
pub use scores::{aipw_scores, aipw_term, NuisanceEstimates, ScoreMatrix, DEFAULT_PROPENSITY_FLOOR};
pub use synth::{synth_generate, SynthSample, SynthSpec};
