use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::PolicyTree;
use crate::data::ScoreMatrix;
use crate::error::{MopolError, Result};
use crate::pareto::WeightVector;

/// What a weight component is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMetric {
    /// Value of the tree against score column `y`.
    Outcome(usize),
    LeafCount,
    NodeCount,
    Depth,
}

impl ObjectiveMetric {
    fn model_scalar(&self, tree: &PolicyTree) -> Option<f64> {
        match self {
            ObjectiveMetric::Outcome(_) => None,
            ObjectiveMetric::LeafCount => Some(tree.leaf_count() as f64),
            ObjectiveMetric::NodeCount => Some(tree.node_count() as f64),
            ObjectiveMetric::Depth => Some(tree.depth() as f64),
        }
    }
}

/// `(1/n) sum_i (2 pi_i - 1) gamma_i` for a binary policy.
pub fn value_binary(assignments: &[u8], scores: &[f64]) -> Result<f64> {
    if assignments.len() != scores.len() || scores.is_empty() {
        return Err(MopolError::invalid("assignments and scores must have equal non-zero length"));
    }
    if assignments.iter().any(|&a| a > 1) {
        return Err(MopolError::invalid("binary assignments must be 0 or 1"));
    }
    let s: f64 = assignments
        .iter()
        .zip(scores)
        .map(|(&a, &g)| (2.0 * f64::from(a) - 1.0) * g)
        .sum();
    Ok(s / scores.len() as f64)
}

/// Mean score of the assigned treatments for outcome `y`.
pub fn value_multi(assignments: &[usize], scores: &ScoreMatrix, y: usize) -> Result<f64> {
    if assignments.len() != scores.n() {
        return Err(MopolError::invalid(format!(
            "{} assignments for {} score rows",
            assignments.len(),
            scores.n()
        )));
    }
    if y >= scores.n_outcomes() {
        return Err(MopolError::invalid(format!("outcome {y} out of range")));
    }
    let d = scores.n_treatments();
    let mut s = 0.0;
    for (i, &w) in assignments.iter().enumerate() {
        if w >= d {
            return Err(MopolError::invalid(format!("row {i}: treatment {w} out of range 0..{d}")));
        }
        s += scores.get(i, w, y);
    }
    Ok(s / scores.n() as f64)
}

/// Value of `tree` for every outcome.
pub fn outcome_values(
    tree: &PolicyTree,
    x: ArrayView2<'_, f64>,
    scores: &ScoreMatrix,
) -> Result<Vec<f64>> {
    let assign = tree.apply(x)?;
    (0..scores.n_outcomes())
        .map(|y| value_multi(&assign, scores, y))
        .collect()
}

/// `sum_y lambda_y V_y` with `V_y` from `metrics[y]`.
pub fn value_weighted(
    tree: &PolicyTree,
    x: ArrayView2<'_, f64>,
    scores: &ScoreMatrix,
    lambda: &WeightVector,
    metrics: &[ObjectiveMetric],
) -> Result<f64> {
    if metrics.len() != lambda.len() {
        return Err(MopolError::invalid(format!(
            "{} metrics for {} weights",
            metrics.len(),
            lambda.len()
        )));
    }
    let assign = tree.apply(x)?;
    let mut total = 0.0;
    for (m, &l) in metrics.iter().zip(lambda.as_slice()) {
        let v = match m {
            ObjectiveMetric::Outcome(y) => value_multi(&assign, scores, *y)?,
            other => other.model_scalar(tree).expect("model-scalar metric"),
        };
        total += l * v;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};
    use rand::{Rng, SeedableRng};

    fn outcomes(n: usize) -> Vec<ObjectiveMetric> {
        (0..n).map(ObjectiveMetric::Outcome).collect()
    }

    #[test]
    fn binary_examples() {
        assert_eq!(value_binary(&[1, 1], &[1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(value_binary(&[1, 0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!(value_binary(&[1], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn binary_matches_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a: Vec<u8> = (0..20).map(|_| rng.random_range(0..2)).collect();
        let g: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut acc = 0.0;
        for i in 0..20 {
            acc += if a[i] == 1 { g[i] } else { -g[i] };
        }
        assert!((value_binary(&a, &g).unwrap() - acc / 20.0).abs() < 1e-14);
    }

    #[test]
    fn multi_single_selection() {
        let s = ScoreMatrix::new(Array3::from_shape_vec((1, 3, 1), vec![0.1, 0.5, 0.2]).unwrap()).unwrap();
        assert_eq!(value_multi(&[1], &s, 0).unwrap(), 0.5);
        assert!(value_multi(&[3], &s, 0).is_err());
    }

    fn random_scores(rng: &mut impl Rng, n: usize, d: usize, n_y: usize) -> ScoreMatrix {
        ScoreMatrix::new(Array3::from_shape_fn((n, d, n_y), |_| rng.random_range(-2.0..2.0))).unwrap()
    }

    #[test]
    fn constant_policy_is_column_mean_and_loop_agrees() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let s = random_scores(&mut rng, 10, 3, 2);
        let col: f64 = (0..10).map(|i| s.get(i, 2, 1)).sum::<f64>() / 10.0;
        assert!((value_multi(&[2; 10], &s, 1).unwrap() - col).abs() < 1e-15);

        let a: Vec<usize> = (0..10).map(|_| rng.random_range(0..3)).collect();
        let mut acc = 0.0;
        for i in 0..10 {
            for w in 0..3 {
                let onehot = if a[i] == w { 1.0 } else { 0.0 };
                acc += onehot * s.get(i, w, 0);
            }
        }
        assert!((value_multi(&a, &s, 0).unwrap() - acc / 10.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_examples() {
        // V = (0.4, -0.2) from a constant policy on one row
        let s = ScoreMatrix::new(Array3::from_shape_vec((1, 2, 2), vec![0.4, -0.2, 0.0, 0.0]).unwrap()).unwrap();
        let x = array![[0.0]];
        let t = PolicyTree::leaf(0);
        let l = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert!((value_weighted(&t, x.view(), &s, &l, &outcomes(2)).unwrap() - 0.1).abs() < 1e-15);
        let one = WeightVector::one_hot(2, 1);
        assert_eq!(value_weighted(&t, x.view(), &s, &one, &outcomes(2)).unwrap(), -0.2);
    }

    #[test]
    fn weighted_matches_recomputation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s = random_scores(&mut rng, 30, 2, 2);
        let x = ndarray::Array2::from_shape_fn((30, 2), |_| rng.random_range(-1.0..1.0));
        let t = PolicyTree::split(1, 0.2, PolicyTree::leaf(1), PolicyTree::leaf(0));
        let l = WeightVector::new(vec![0.3, 0.7]).unwrap();
        let mut acc = 0.0;
        for i in 0..30 {
            let w = if x[[i, 1]] <= 0.2 { 1 } else { 0 };
            acc += 0.3 * s.get(i, w, 0) + 0.7 * s.get(i, w, 1);
        }
        let got = value_weighted(&t, x.view(), &s, &l, &outcomes(2)).unwrap();
        assert!((got - acc / 30.0).abs() < 1e-12);
    }

    #[test]
    fn one_hot_weights_are_exactly_outcome_values() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let s = random_scores(&mut rng, 15, 2, 3);
        let x = ndarray::Array2::from_shape_fn((15, 1), |_| rng.random_range(-1.0..1.0));
        let t = PolicyTree::split(0, 0.0, PolicyTree::leaf(0), PolicyTree::leaf(1));
        let vals = outcome_values(&t, x.view(), &s).unwrap();
        for y in 0..3 {
            let l = WeightVector::one_hot(3, y);
            assert_eq!(value_weighted(&t, x.view(), &s, &l, &outcomes(3)).unwrap(), vals[y]);
        }
    }

    #[test]
    fn model_scalar_metrics_use_tree_structure() {
        let s = ScoreMatrix::new(Array3::zeros((2, 2, 1))).unwrap();
        let x = array![[0.0], [1.0]];
        let t = PolicyTree::split(0, 0.5, PolicyTree::leaf(0), PolicyTree::leaf(1));
        let l = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let m = [ObjectiveMetric::Outcome(0), ObjectiveMetric::LeafCount];
        assert_eq!(value_weighted(&t, x.view(), &s, &l, &m).unwrap(), 1.0);
    }
}
