use ndarray::{ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::SeMode;
use crate::data::ScoreMatrix;
use crate::error::{MopolError, Result};
use crate::pareto::WeightVector;
use crate::policytree::{fit_tree, outcome_values, TreeFitConfig};
use crate::rng;

const BOOTSTRAP_STREAM: u64 = 0xb007;

/// Per-outcome values of trees refit on `replicates` row resamples of
/// `(x, scores)`, each valued against its own resample. Row `b` of the result
/// depends only on `seed` and `b`.
pub fn bootstrap_values(
    x: ArrayView2<'_, f64>,
    scores: &ScoreMatrix,
    lambda: &WeightVector,
    cfg: &TreeFitConfig,
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let n = x.nrows();
    if n == 0 {
        return Err(MopolError::invalid("cannot bootstrap zero rows"));
    }
    (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, &[BOOTSTRAP_STREAM, b as u64]);
            let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let xb = x.select(Axis(0), &idx);
            let sb = scores.select_rows(&idx);
            let tree = fit_tree(xb.view(), &sb, lambda, cfg)?;
            outcome_values(&tree, xb.view(), &sb)
        })
        .collect()
}

/// Reduce replicate values to one standard error per outcome.
pub fn standard_errors(values: &[Vec<f64>], mode: SeMode) -> Result<Vec<f64>> {
    let b = values.len();
    if b < 2 {
        return Err(MopolError::invalid("at least two bootstrap replicates are required"));
    }
    let n_y = values[0].len();
    Ok((0..n_y)
        .map(|y| {
            let mean = values.iter().map(|v| v[y]).sum::<f64>() / b as f64;
            let ss: f64 = values.iter().map(|v| (v[y] - mean).powi(2)).sum();
            let bf = b as f64;
            match mode {
                SeMode::Conventional => (ss / (bf - 1.0)).sqrt(),
                SeMode::Alg1Literal => (ss / bf / (bf - 1.0)).sqrt(),
            }
        })
        .collect())
}

/// Bootstrap standard error of each outcome value of the tree fitted at `lambda`.
pub fn bootstrap_se(
    x: ArrayView2<'_, f64>,
    scores: &ScoreMatrix,
    lambda: &WeightVector,
    cfg: &TreeFitConfig,
    replicates: usize,
    mode: SeMode,
    seed: u64,
) -> Result<Vec<f64>> {
    standard_errors(&bootstrap_values(x, scores, lambda, cfg, replicates, seed)?, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policytree::FitterKind;
    use ndarray::{Array2, Array3};

    #[test]
    fn constant_scores_have_zero_se() {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| (i * 2 + j) as f64);
        let s = ScoreMatrix::new(Array3::from_shape_fn((20, 2, 2), |(_, w, y)| (w + 2 * y) as f64)).unwrap();
        let l = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let cfg = TreeFitConfig::new(FitterKind::Greedy, 2);
        for mode in [SeMode::Conventional, SeMode::Alg1Literal] {
            assert_eq!(bootstrap_se(x.view(), &s, &l, &cfg, 10, mode, 1).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn literal_mode_is_conventional_over_root_b() {
        let v: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * 0.3, (i * i) as f64]).collect();
        let c = standard_errors(&v, SeMode::Conventional).unwrap();
        let a = standard_errors(&v, SeMode::Alg1Literal).unwrap();
        for (x, y) in c.iter().zip(&a) {
            assert!((x / 7f64.sqrt() - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_row_resamples_are_leaves() {
        let x = Array2::from_elem((1, 1), 0.0);
        let s = ScoreMatrix::new(Array3::from_elem((1, 2, 1), 1.0)).unwrap();
        let cfg = TreeFitConfig::new(FitterKind::Optimal, 2);
        let se = bootstrap_se(x.view(), &s, &WeightVector::one_hot(1, 0), &cfg, 5, SeMode::Conventional, 0).unwrap();
        assert_eq!(se, vec![0.0]);
    }
}
