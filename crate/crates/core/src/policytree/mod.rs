//! Policy trees: fitting, application and value functionals.

mod fit;
mod tree;
mod value;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fit::{fit_greedy, fit_hybrid, fit_optimal, fit_tree, optimal_cost_estimate};
pub use tree::PolicyTree;
pub use value::{outcome_values, value_binary, value_multi, value_weighted, ObjectiveMetric};

use crate::error::{MopolError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitterKind {
    Greedy,
    Hybrid,
    Optimal,
}

impl fmt::Display for FitterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitterKind::Greedy => "greedy",
            FitterKind::Hybrid => "hybrid",
            FitterKind::Optimal => "optimal",
        })
    }
}

impl FromStr for FitterKind {
    type Err = MopolError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(FitterKind::Greedy),
            "hybrid" => Ok(FitterKind::Hybrid),
            "optimal" => Ok(FitterKind::Optimal),
            other => Err(MopolError::invalid(format!(
                "unknown fitter '{other}' (expected greedy, hybrid or optimal)"
            ))),
        }
    }
}

/// Where to put a threshold between two consecutive distinct values `lo < hi`.
/// Both rules induce the same partitions of the training rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRule {
    #[default]
    Midpoint,
    Lower,
}

fn default_lookahead() -> usize {
    2
}

fn default_epsilon() -> f64 {
    1e-12
}

fn default_max_ops() -> f64 {
    5e10
}

/// Tree fitter settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeFitConfig {
    pub kind: FitterKind,
    /// Number of split levels.
    pub depth: usize,
    /// Search horizon of the hybrid fitter.
    #[serde(default = "default_lookahead")]
    pub lookahead: usize,
    #[serde(default)]
    pub split_rule: SplitRule,
    /// Minimum mean-value gain for a split to beat a leaf.
    #[serde(default = "default_epsilon")]
    pub value_epsilon: f64,
    /// Feature indices allowed for splitting; all when absent.
    #[serde(default)]
    pub covariate_mask: Option<Vec<usize>>,
    /// Refuse exact searches whose estimated work exceeds this.
    #[serde(default = "default_max_ops")]
    pub max_optimal_ops: f64,
}

impl TreeFitConfig {
    pub fn new(kind: FitterKind, depth: usize) -> Self {
        TreeFitConfig {
            kind,
            depth,
            lookahead: default_lookahead(),
            split_rule: SplitRule::default(),
            value_epsilon: default_epsilon(),
            covariate_mask: None,
            max_optimal_ops: default_max_ops(),
        }
    }

    pub fn with_kind(&self, kind: FitterKind) -> Self {
        TreeFitConfig { kind, ..self.clone() }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.kind == FitterKind::Hybrid && self.lookahead < 2 {
            return Err(MopolError::invalid("hybrid lookahead must be at least 2"));
        }
        if !(self.value_epsilon >= 0.0) {
            return Err(MopolError::invalid("value_epsilon must be non-negative"));
        }
        if let Some(mask) = &self.covariate_mask {
            if mask.is_empty() {
                return Err(MopolError::invalid("covariate mask selects no features"));
            }
            if let Some(&j) = mask.iter().find(|&&j| j >= p) {
                return Err(MopolError::invalid(format!(
                    "covariate mask index {j} out of range 0..{p}"
                )));
            }
        }
        Ok(())
    }

    /// Allowed features, sorted and deduplicated.
    pub fn features(&self, p: usize) -> Vec<usize> {
        match &self.covariate_mask {
            None => (0..p).collect(),
            Some(m) => {
                let mut v = m.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }
}
