//! The frontier search loop, bootstrap standard errors and final model fits.

mod bootstrap;
mod config;
mod final_fit;
mod run;

pub use bootstrap::{bootstrap_se, bootstrap_values, standard_errors};
pub use config::{Budget, MopolConfig, SeMode};
pub use final_fit::{evaluate_rules, fit_final, train_rows, FinalReport, FinalSpec, SplitMode};
pub use run::{initial_points, run_mopol, write_value_curve, MopolRun, RunTrace, TraceRecord};
