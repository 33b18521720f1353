use std::path::Path;
use std::time::Instant;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::ScoreMatrix;
use crate::error::{MopolError, Result};
use crate::pareto::WeightVector;
use crate::policytree::{fit_tree, outcome_values, FitterKind, PolicyTree, TreeFitConfig};
use crate::rng;

const SPLIT_STREAM: u64 = 0x5917;

/// Which rows form the training partition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// A seeded random subset.
    #[default]
    Shuffle,
    /// The leading rows, in file order.
    Head,
}

/// Held-out evaluation of one tree fitted on a training partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub lambda: WeightVector,
    pub fitter: FitterKind,
    pub depth: usize,
    pub train_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub outcome_names: Vec<String>,
    pub train_values: Vec<f64>,
    pub test_values: Vec<f64>,
    pub train_weighted: f64,
    pub test_weighted: f64,
    pub fit_seconds: f64,
    pub tree_text: String,
    pub tree: PolicyTree,
    pub train_rows: Vec<usize>,
    pub warnings: Vec<String>,
}

impl FinalReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| MopolError::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MopolError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Inputs of [`fit_final`] beyond the data.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalSpec {
    pub lambda: WeightVector,
    pub tree: TreeFitConfig,
    /// Fraction of rows used for training, in `(0, 1)`.
    pub train_fraction: f64,
    pub split: SplitMode,
    pub seed: u64,
}

/// Ascending training-row indices.
pub fn train_rows(n: usize, fraction: f64, mode: SplitMode, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(MopolError::invalid(format!("train fraction {fraction} outside (0, 1)")));
    }
    if n < 2 {
        return Err(MopolError::invalid("need at least two rows to split"));
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rows: Vec<usize> = (0..n).collect();
    if mode == SplitMode::Shuffle {
        rows.shuffle(&mut rng::stream(seed, &[SPLIT_STREAM]));
    }
    let mut train = rows[..k].to_vec();
    train.sort_unstable();
    Ok(train)
}

fn weighted(lambda: &WeightVector, values: &[f64]) -> f64 {
    lambda.as_slice().iter().zip(values).map(|(l, v)| l * v).sum()
}

/// Fit on a training partition and value the tree on both partitions.
///
/// `treatments`, when given, is used to warn about arms absent from training.
pub fn fit_final(
    x: ArrayView2<'_, f64>,
    scores: &ScoreMatrix,
    treatments: Option<&[usize]>,
    spec: &FinalSpec,
    names: &[String],
    outcome_names: &[String],
) -> Result<FinalReport> {
    let n = x.nrows();
    if scores.n() != n {
        return Err(MopolError::invalid(format!("covariates have {n} rows but scores have {}", scores.n())));
    }
    if names.len() != x.ncols() {
        return Err(MopolError::invalid("one feature name per covariate column is required"));
    }
    let train = train_rows(n, spec.train_fraction, spec.split, spec.seed)?;
    let mut is_train = vec![false; n];
    for &i in &train {
        is_train[i] = true;
    }
    let test: Vec<usize> = (0..n).filter(|&i| !is_train[i]).collect();

    let mut warnings = Vec::new();
    if let Some(w) = treatments {
        for arm in 0..scores.n_treatments() {
            if !train.iter().any(|&i| w[i] == arm) {
                let msg = format!("treatment {arm} does not occur in the training partition");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let x_train = x.select(Axis(0), &train);
    let s_train = scores.select_rows(&train);
    let x_test = x.select(Axis(0), &test);
    let s_test = scores.select_rows(&test);
    let t = Instant::now();
    let tree = fit_tree(x_train.view(), &s_train, &spec.lambda, &spec.tree)?;
    let fit_seconds = t.elapsed().as_secs_f64();
    let train_values = outcome_values(&tree, x_train.view(), &s_train)?;
    let test_values = outcome_values(&tree, x_test.view(), &s_test)?;
    Ok(FinalReport {
        lambda: spec.lambda.clone(),
        fitter: spec.tree.kind,
        depth: spec.tree.depth,
        train_fraction: spec.train_fraction,
        n_train: train.len(),
        n_test: test.len(),
        outcome_names: outcome_names.to_vec(),
        train_weighted: weighted(&spec.lambda, &train_values),
        test_weighted: weighted(&spec.lambda, &test_values),
        train_values,
        test_values,
        fit_seconds,
        tree_text: tree.render_text(names),
        tree,
        train_rows: train,
        warnings,
    })
}

/// Per-outcome values of a given tree, without fitting.
pub fn evaluate_rules(tree: &PolicyTree, scores: &ScoreMatrix, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    outcome_values(tree, x, scores)
}
