mod common;

use common::{brute_force_max, dyadic_instance, rewards, tree_sum};
use mopol::data::ScoreMatrix;
use mopol::pareto::WeightVector;
use mopol::policytree::{
    fit_greedy, fit_hybrid, fit_optimal, fit_tree, outcome_values, value_weighted, FitterKind,
    ObjectiveMetric, PolicyTree, TreeFitConfig,
};
use ndarray::{Array2, Array3, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(depth: usize) -> TreeFitConfig {
    TreeFitConfig::new(FitterKind::Optimal, depth)
}

fn single_outcome(rows: &[[f64; 2]]) -> ScoreMatrix {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    ScoreMatrix::new(Array3::from_shape_vec((rows.len(), 2, 1), flat).unwrap()).unwrap()
}

#[test]
fn dominant_treatment_gives_a_constant_tree() {
    let x = Array2::from_shape_fn((8, 2), |(i, j)| (i * 3 + j) as f64);
    let rows: Vec<[f64; 2]> = (0..8).map(|i| [i as f64 * 0.1, 1.0 + i as f64 * 0.1]).collect();
    let s = single_outcome(&rows);
    let l = WeightVector::one_hot(1, 0);
    for kind in [FitterKind::Greedy, FitterKind::Hybrid, FitterKind::Optimal] {
        let t = fit_tree(x.view(), &s, &l, &TreeFitConfig::new(kind, 2)).unwrap();
        assert_eq!(t, PolicyTree::leaf(1), "{kind}");
    }
}

#[test]
fn separable_instance_splits_near_zero() {
    let xs = [-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0];
    let x = Array2::from_shape_fn((8, 1), |(i, _)| xs[i]);
    let rows: Vec<[f64; 2]> = xs.iter().map(|&v| if v < 0.0 { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
    let s = single_outcome(&rows);
    let l = WeightVector::one_hot(1, 0);
    let g = fit_greedy(x.view(), &s, &l, &cfg(1)).unwrap();
    assert_eq!(g, PolicyTree::split(0, 0.0, PolicyTree::leaf(0), PolicyTree::leaf(1)));
    // lookahead agrees when myopia suffices
    assert_eq!(fit_hybrid(x.view(), &s, &l, &cfg(2)).unwrap(), fit_greedy(x.view(), &s, &l, &cfg(2)).unwrap());
}

#[test]
fn depth_zero_optimal_is_best_column_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inst = dyadic_instance(&mut rng, 10, 2, 3, 2);
    let t = fit_optimal(inst.x.view(), &inst.scores, &inst.lambda, &cfg(0)).unwrap();
    let r = rewards(&inst.scores, &inst.lambda);
    let col: Vec<f64> = (0..3).map(|w| r.iter().map(|row| row[w]).sum()).collect();
    let best = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = col.iter().position(|&c| c == best).unwrap();
    assert_eq!(t, PolicyTree::leaf(first));
}

/// Treatment 1 is better exactly when x0 and x1 share a sign; no single split helps.
fn xor_instance() -> (Array2<f64>, ScoreMatrix) {
    let pts = [-1.5, -0.5, 0.5, 1.5];
    let mut x = Vec::new();
    let mut rows = Vec::new();
    for &a in &pts {
        for &b in &pts {
            x.extend([a, b]);
            rows.push(if a * b > 0.0 { [0.0, 1.0] } else { [1.0, 0.0] });
        }
    }
    (Array2::from_shape_vec((16, 2), x).unwrap(), single_outcome(&rows))
}

#[test]
fn xor_needs_lookahead() {
    let (x, s) = xor_instance();
    let l = WeightVector::one_hot(1, 0);
    let r = rewards(&s, &l);
    let opt = fit_optimal(x.view(), &s, &l, &cfg(2)).unwrap();
    let hyb = fit_hybrid(x.view(), &s, &l, &cfg(2)).unwrap();
    let grd = fit_greedy(x.view(), &s, &l, &cfg(2)).unwrap();
    assert_eq!(tree_sum(&opt, &x, &r), 16.0);
    assert_eq!(tree_sum(&hyb, &x, &r), tree_sum(&opt, &x, &r));
    assert!(tree_sum(&grd, &x, &r) < 16.0);
}

#[test]
fn optimal_matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..60 {
        let n = 1 + case % 12;
        let p = 1 + case % 2;
        let depth = case % 3;
        let inst = dyadic_instance(&mut rng, n, p, 2, 2);
        let r = rewards(&inst.scores, &inst.lambda);
        let t = fit_optimal(inst.x.view(), &inst.scores, &inst.lambda, &cfg(depth)).unwrap();
        assert!(t.depth() <= depth);
        assert_eq!(tree_sum(&t, &inst.x, &r), brute_force_max(&inst.x, &r, depth), "case {case}");
    }
}

#[test]
fn greedy_and_hybrid_never_beat_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let inst = dyadic_instance(&mut rng, 12, 2, 2, 2);
        let r = rewards(&inst.scores, &inst.lambda);
        let v = |k| {
            let t = fit_tree(inst.x.view(), &inst.scores, &inst.lambda, &TreeFitConfig::new(k, 2)).unwrap();
            tree_sum(&t, &inst.x, &r)
        };
        let opt = v(FitterKind::Optimal);
        assert!(v(FitterKind::Greedy) <= opt);
        assert!(v(FitterKind::Hybrid) <= opt);
    }
}

#[test]
fn feasibility_guard_rejects_large_exact_searches() {
    let x = Array2::from_shape_fn((50, 3), |(i, j)| (i * 7 + j) as f64);
    let s = ScoreMatrix::new(Array3::zeros((50, 2, 1))).unwrap();
    let mut c = cfg(3);
    c.max_optimal_ops = 1e3;
    let err = fit_optimal(x.view(), &s, &WeightVector::one_hot(1, 0), &c).unwrap_err();
    assert!(err.to_string().contains("greedy"));
}

#[test]
fn covariate_mask_restricts_split_features() {
    let (x, s) = xor_instance();
    let mut c = cfg(2);
    c.covariate_mask = Some(vec![1]);
    let t = fit_optimal(x.view(), &s, &WeightVector::one_hot(1, 0), &c).unwrap();
    assert!(t.max_feature().is_none_or(|f| f == 1));
}

fn arb_instance() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 2usize..=10, 1usize..=2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_value_is_monotone_in_depth((seed, n, p) in arb_instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = dyadic_instance(&mut rng, n, p, 3, 2);
        let r = rewards(&inst.scores, &inst.lambda);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=2 {
            let t = fit_optimal(inst.x.view(), &inst.scores, &inst.lambda, &cfg(k)).unwrap();
            let v = tree_sum(&t, &inst.x, &r);
            prop_assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn constant_shift_leaves_the_optimal_value_gap_zero((seed, n, p) in arb_instance(), c in -4i32..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = dyadic_instance(&mut rng, n, p, 2, 2);
        let shift = f64::from(c) / 4.0;
        let mut raw = inst.scores.as_array().clone();
        raw.index_axis_mut(Axis(2), 1).mapv_inplace(|v| v + shift);
        let shifted = ScoreMatrix::new(raw).unwrap();
        let t0 = fit_optimal(inst.x.view(), &inst.scores, &inst.lambda, &cfg(2)).unwrap();
        let t1 = fit_optimal(inst.x.view(), &shifted, &inst.lambda, &cfg(2)).unwrap();
        // each tree's value moves by the same constant, so the argmax is still optimal
        let r0 = rewards(&inst.scores, &inst.lambda);
        prop_assert_eq!(tree_sum(&t1, &inst.x, &r0), tree_sum(&t0, &inst.x, &r0));
        let v0 = outcome_values(&t0, inst.x.view(), &inst.scores).unwrap();
        let v1 = outcome_values(&t0, inst.x.view(), &shifted).unwrap();
        prop_assert!((v1[1] - v0[1] - shift).abs() < 1e-12);
    }

    #[test]
    fn row_permutation_leaves_fitted_values_unchanged((seed, n, p) in arb_instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = dyadic_instance(&mut rng, n, p, 2, 2);
        let perm: Vec<usize> = (0..n).rev().collect();
        let xp = inst.x.select(Axis(0), &perm);
        let sp = inst.scores.select_rows(&perm);
        let r = rewards(&inst.scores, &inst.lambda);
        let rp = rewards(&sp, &inst.lambda);
        for kind in [FitterKind::Greedy, FitterKind::Hybrid, FitterKind::Optimal] {
            let c = TreeFitConfig::new(kind, 2);
            let a = fit_tree(inst.x.view(), &inst.scores, &inst.lambda, &c).unwrap();
            let b = fit_tree(xp.view(), &sp, &inst.lambda, &c).unwrap();
            prop_assert_eq!(tree_sum(&a, &inst.x, &r), tree_sum(&b, &xp, &rp));
            prop_assert_eq!(&a, &b);
        }
    }

    #[test]
    fn fitting_is_deterministic((seed, n, p) in arb_instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = dyadic_instance(&mut rng, n, p, 3, 3);
        for kind in [FitterKind::Greedy, FitterKind::Hybrid, FitterKind::Optimal] {
            let c = TreeFitConfig::new(kind, 2);
            let a = fit_tree(inst.x.view(), &inst.scores, &inst.lambda, &c).unwrap();
            let b = fit_tree(inst.x.view(), &inst.scores, &inst.lambda, &c).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn weighted_value_is_linear_in_lambda((seed, n, p) in arb_instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = dyadic_instance(&mut rng, n, p, 2, 3);
        let t = fit_greedy(inst.x.view(), &inst.scores, &inst.lambda, &cfg(2)).unwrap();
        let metrics: Vec<_> = (0..3).map(ObjectiveMetric::Outcome).collect();
        let vals = outcome_values(&t, inst.x.view(), &inst.scores).unwrap();
        for y in 0..3 {
            let one = WeightVector::one_hot(3, y);
            prop_assert_eq!(value_weighted(&t, inst.x.view(), &inst.scores, &one, &metrics).unwrap(), vals[y]);
        }
        let mixed = value_weighted(&t, inst.x.view(), &inst.scores, &inst.lambda, &metrics).unwrap();
        let direct: f64 = inst.lambda.as_slice().iter().zip(&vals).map(|(l, v)| l * v).sum();
        prop_assert!((mixed - direct).abs() < 1e-12);
    }
}
