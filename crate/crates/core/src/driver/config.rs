use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionConfig;
use crate::error::{MopolError, Result};
use crate::policytree::TreeFitConfig;

/// How bootstrap replicate values become a standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeMode {
    /// Sample standard deviation of the replicate values.
    #[default]
    Conventional,
    /// `sqrt(Var[v] / (B - 1))` with the population variance, which equals the
    /// conventional value divided by `sqrt(B)`.
    #[serde(rename = "alg1-literal")]
    Alg1Literal,
}

impl std::str::FromStr for SeMode {
    type Err = MopolError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(SeMode::Conventional),
            "alg1-literal" => Ok(SeMode::Alg1Literal),
            other => Err(MopolError::invalid(format!(
                "unknown se mode '{other}' (expected conventional or alg1-literal)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Budget {
    Iterations(usize),
    Seconds(f64),
}

fn default_replicates() -> usize {
    100
}

/// Settings of one frontier run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MopolConfig {
    pub tree: TreeFitConfig,
    /// Bootstrap replicates per evaluation.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Number of evaluated weight vectors. Exactly one budget must be set.
    #[serde(default)]
    pub budget_iterations: Option<usize>,
    /// Wall-clock budget; checked before each evaluation.
    #[serde(default)]
    pub budget_seconds: Option<f64>,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub se_mode: SeMode,
    #[serde(default)]
    pub seed: u64,
}

impl MopolConfig {
    pub fn new(tree: TreeFitConfig, budget: Budget) -> Self {
        let (budget_iterations, budget_seconds) = match budget {
            Budget::Iterations(n) => (Some(n), None),
            Budget::Seconds(s) => (None, Some(s)),
        };
        MopolConfig {
            tree,
            replicates: default_replicates(),
            budget_iterations,
            budget_seconds,
            acquisition: AcquisitionConfig::default(),
            se_mode: SeMode::default(),
            seed: 0,
        }
    }

    /// JSON, or TOML when the file name ends in `.toml`.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MopolError::io(path, e))?;
        let cfg: MopolConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| MopolError::Toml(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text)?
        };
        Ok(cfg)
    }

    pub fn budget(&self) -> Result<Budget> {
        match (self.budget_iterations, self.budget_seconds) {
            (Some(n), None) if n > 0 => Ok(Budget::Iterations(n)),
            (None, Some(s)) if s > 0.0 && s.is_finite() => Ok(Budget::Seconds(s)),
            (Some(_), Some(_)) | (None, None) => Err(MopolError::invalid(
                "exactly one of budget_iterations and budget_seconds must be set",
            )),
            _ => Err(MopolError::invalid("budget must be positive")),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.replicates < 2 {
            return Err(MopolError::invalid("replicates must be at least 2"));
        }
        self.budget()?;
        self.acquisition.validate()?;
        self.tree.validate(p)
    }
}
