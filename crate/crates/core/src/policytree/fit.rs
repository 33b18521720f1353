//! Greedy, hybrid-lookahead and exact depth-limited tree search.
//!
//! All three fitters maximize the summed reward `sum_i r[i, pi(x_i)]` where
//! `r[i, w] = sum_y lambda_y * scores[i, w, y]`. A node keeps, for every
//! candidate feature, its rows sorted by that feature; a split is a boundary
//! between two consecutive distinct values in one of those orders.
//!
//! Candidate order is feature index, then threshold. A candidate replaces the
//! incumbent only when strictly better, or equally good with fewer leaves, so
//! ties go to the smaller tree, then the lowest feature and lowest threshold. Leaf treatments break ties to the lowest index.
//! A split is kept over a leaf only if it improves the node's mean value by
//! more than `value_epsilon`.

use ndarray::ArrayView2;

use super::{FitterKind, PolicyTree, SplitRule, TreeFitConfig};
use crate::data::ScoreMatrix;
use crate::error::{MopolError, Result};
use crate::pareto::WeightVector;

type Lists = Vec<Vec<u32>>;

/// Best subtree found for a node, scored by summed reward.
#[derive(Clone, Debug)]
struct Fitted {
    value: f64,
    tree: PolicyTree,
}

struct Problem<'a> {
    x: &'a [f64],
    p: usize,
    rewards: Vec<f64>,
    d: usize,
    /// Allowed feature indices, ascending.
    features: Vec<usize>,
    eps_sum: f64,
    rule: SplitRule,
}

impl Problem<'_> {
    #[inline]
    fn xv(&self, row: u32, k: usize) -> f64 {
        self.x[row as usize * self.p + self.features[k]]
    }

    #[inline]
    fn reward(&self, row: u32) -> &[f64] {
        let r = row as usize * self.d;
        &self.rewards[r..r + self.d]
    }

    fn threshold(&self, lo: f64, hi: f64) -> f64 {
        match self.rule {
            SplitRule::Lower => lo,
            SplitRule::Midpoint => {
                let m = lo + (hi - lo) / 2.0;
                if m < hi {
                    m
                } else {
                    lo
                }
            }
        }
    }

    fn totals(&self, rows: &[u32]) -> Vec<f64> {
        let mut t = vec![0.0; self.d];
        for &r in rows {
            for (a, b) in t.iter_mut().zip(self.reward(r)) {
                *a += b;
            }
        }
        t
    }

    fn root_lists(&self, n: usize) -> Lists {
        (0..self.features.len())
            .map(|k| {
                let mut rows: Vec<u32> = (0..n as u32).collect();
                rows.sort_by(|&a, &b| self.xv(a, k).total_cmp(&self.xv(b, k)).then(a.cmp(&b)));
                rows
            })
            .collect()
    }

    /// Keep rows whose side flag equals `want`, preserving every order.
    fn filter(lists: &Lists, side: &[u8], want: u8) -> Lists {
        lists
            .iter()
            .map(|l| l.iter().copied().filter(|&r| side[r as usize] == want).collect())
            .collect()
    }

    fn best_leaf(totals: &[f64]) -> (usize, f64) {
        let mut best = (0, totals[0]);
        for (w, &v) in totals.iter().enumerate().skip(1) {
            if v > best.1 {
                best = (w, v);
            }
        }
        best
    }

    /// For every side `s < n_sides`, the best single split over rows with
    /// `side[row] == s`, given each side's reward totals. `None` when a side
    /// has no two distinct values on any feature.
    fn scan_stumps(&self, lists: &Lists, side: &[u8], totals: &[Vec<f64>]) -> Vec<Option<Fitted>> {
        let n_sides = totals.len();
        let d = self.d;
        // (value, k, lo, hi, left_w, right_w)
        let mut best: Vec<Option<(f64, usize, f64, f64, usize, usize)>> = vec![None; n_sides];
        let mut prefix = vec![0.0; n_sides * d];
        let mut last = vec![0.0; n_sides];
        let mut seen = vec![false; n_sides];
        for (k, list) in lists.iter().enumerate() {
            prefix.iter_mut().for_each(|v| *v = 0.0);
            seen.iter_mut().for_each(|v| *v = false);
            for &r in list {
                let s = side[r as usize] as usize;
                let xv = self.xv(r, k);
                let pre = &mut prefix[s * d..(s + 1) * d];
                if seen[s] && xv > last[s] {
                    let tot = &totals[s];
                    let (lw, lv) = Self::best_leaf(pre);
                    let mut rw = 0;
                    let mut rv = tot[0] - pre[0];
                    for w in 1..d {
                        let v = tot[w] - pre[w];
                        if v > rv {
                            rw = w;
                            rv = v;
                        }
                    }
                    let v = lv + rv;
                    if best[s].is_none_or(|b| v > b.0) {
                        best[s] = Some((v, k, last[s], xv, lw, rw));
                    }
                }
                for (a, b) in pre.iter_mut().zip(self.reward(r)) {
                    *a += b;
                }
                last[s] = xv;
                seen[s] = true;
            }
        }
        best.into_iter()
            .map(|b| {
                b.map(|(value, k, lo, hi, lw, rw)| Fitted {
                    value,
                    tree: PolicyTree::split(
                        self.features[k],
                        self.threshold(lo, hi),
                        PolicyTree::leaf(lw),
                        PolicyTree::leaf(rw),
                    ),
                })
            })
            .collect()
    }

    fn choose(&self, leaf: Fitted, split: Option<Fitted>) -> Fitted {
        match split {
            Some(s) if s.value > leaf.value + self.eps_sum => s,
            _ => leaf,
        }
    }

    fn leaf_from_totals(totals: &[f64]) -> Fitted {
        let (w, v) = Self::best_leaf(totals);
        Fitted {
            value: v,
            tree: PolicyTree::leaf(w),
        }
    }

    /// Exact best tree of depth at most `depth` for the node's rows.
    fn best(&self, lists: &Lists, depth: usize, side: &mut Vec<u8>) -> Fitted {
        let rows = &lists[0];
        let totals = self.totals(rows);
        let leaf = Self::leaf_from_totals(&totals);
        if depth == 0 || rows.len() < 2 {
            return leaf;
        }
        if depth == 1 {
            for &r in rows {
                side[r as usize] = 0;
            }
            let stump = self.scan_stumps(lists, side, std::slice::from_ref(&totals)).pop().flatten();
            return self.choose(leaf, stump);
        }

        let d = self.d;
        let mut best: Option<Fitted> = None;
        let mut child_side = vec![0u8; side.len()];
        for (k, list) in lists.iter().enumerate() {
            for &r in rows {
                side[r as usize] = 1;
            }
            let mut left_tot = vec![0.0; d];
            for pos in 1..list.len() {
                let moved = list[pos - 1];
                side[moved as usize] = 0;
                for (a, b) in left_tot.iter_mut().zip(self.reward(moved)) {
                    *a += b;
                }
                let lo = self.xv(moved, k);
                let hi = self.xv(list[pos], k);
                if !(hi > lo) {
                    continue;
                }
                let right_tot: Vec<f64> = totals.iter().zip(&left_tot).map(|(t, l)| t - l).collect();
                let (left, right) = if depth == 2 {
                    let tots = [left_tot.clone(), right_tot.clone()];
                    let mut stumps = self.scan_stumps(lists, side, &tots).into_iter();
                    let l = self.choose(Self::leaf_from_totals(&tots[0]), stumps.next().flatten());
                    let r = self.choose(Self::leaf_from_totals(&tots[1]), stumps.next().flatten());
                    (l, r)
                } else {
                    let l_lists = Self::filter(lists, side, 0);
                    let r_lists = Self::filter(lists, side, 1);
                    (
                        self.best(&l_lists, depth - 1, &mut child_side),
                        self.best(&r_lists, depth - 1, &mut child_side),
                    )
                };
                let v = left.value + right.value;
                let leaves = left.tree.leaf_count() + right.tree.leaf_count();
                if best
                    .as_ref()
                    .is_none_or(|b| v > b.value || (v == b.value && leaves < b.tree.leaf_count()))
                {
                    best = Some(Fitted {
                        value: v,
                        tree: PolicyTree::split(self.features[k], self.threshold(lo, hi), left.tree, right.tree),
                    });
                }
            }
        }
        self.choose(leaf, best)
    }

    /// Commit the root split of a depth-`lookahead` search, then recurse.
    fn lookahead(&self, lists: &Lists, remaining: usize, lookahead: usize, side: &mut Vec<u8>) -> PolicyTree {
        if remaining == 0 || lists[0].len() < 2 {
            return self.best(lists, 0, side).tree;
        }
        let found = self.best(lists, lookahead.min(remaining), side);
        match found.tree {
            PolicyTree::Leaf { .. } => found.tree,
            PolicyTree::Split {
                feature, threshold, ..
            } => {
                for &r in &lists[0] {
                    side[r as usize] = u8::from(self.x[r as usize * self.p + feature] > threshold);
                }
                let l = Self::filter(lists, side, 0);
                let r = Self::filter(lists, side, 1);
                PolicyTree::split(
                    feature,
                    threshold,
                    self.lookahead(&l, remaining - 1, lookahead, side),
                    self.lookahead(&r, remaining - 1, lookahead, side),
                )
            }
        }
    }
}

/// Estimated work of the exact search, `(p n)^k (log2 n + d)`.
pub fn optimal_cost_estimate(n: usize, p: usize, d: usize, depth: usize) -> f64 {
    let n = n.max(2) as f64;
    (p as f64 * n).powi(depth as i32) * (n.log2() + d as f64)
}

fn setup<'a>(
    x: &'a [f64],
    n: usize,
    p: usize,
    scores: &ScoreMatrix,
    lambda: &WeightVector,
    cfg: &TreeFitConfig,
) -> Result<Problem<'a>> {
    cfg.validate(p)?;
    if scores.n() != n {
        return Err(MopolError::invalid(format!(
            "covariates have {n} rows but scores have {}",
            scores.n()
        )));
    }
    if lambda.len() != scores.n_outcomes() {
        return Err(MopolError::invalid(format!(
            "weight vector has {} entries but scores have {} outcomes",
            lambda.len(),
            scores.n_outcomes()
        )));
    }
    let features = cfg.features(p);
    Ok(Problem {
        x,
        p,
        rewards: scores.weighted_rewards(lambda.as_slice()),
        d: scores.n_treatments(),
        features,
        eps_sum: cfg.value_epsilon * n as f64,
        rule: cfg.split_rule,
    })
}

/// Fit a tree of `cfg.kind` at weights `lambda`.
pub fn fit_tree(
    x: ArrayView2<'_, f64>,
    scores: &ScoreMatrix,
    lambda: &WeightVector,
    cfg: &TreeFitConfig,
) -> Result<PolicyTree> {
    let (n, p) = x.dim();
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().expect("standard layout is contiguous");
    let prob = setup(xs, n, p, scores, lambda, cfg)?;
    if n == 0 {
        return Err(MopolError::invalid("cannot fit a tree on zero rows"));
    }
    if cfg.kind == FitterKind::Optimal {
        let cost = optimal_cost_estimate(n, prob.features.len(), prob.d, cfg.depth);
        if cost > cfg.max_optimal_ops {
            return Err(MopolError::Infeasible(format!(
                "estimated cost {cost:.3e} exceeds guard {:.3e} (n={n}, p={}, depth={}); use a greedy or hybrid fitter",
                cfg.max_optimal_ops,
                prob.features.len(),
                cfg.depth
            )));
        }
    }
    let lists = prob.root_lists(n);
    let mut side = vec![0u8; n];
    let tree = match cfg.kind {
        FitterKind::Greedy => prob.lookahead(&lists, cfg.depth, 1, &mut side),
        FitterKind::Hybrid => prob.lookahead(&lists, cfg.depth, cfg.lookahead, &mut side),
        FitterKind::Optimal => prob.best(&lists, cfg.depth, &mut side).tree,
    };
    Ok(tree)
}

pub fn fit_greedy(
    x: ArrayView2<'_, f64>,
    scores: &ScoreMatrix,
    lambda: &WeightVector,
    cfg: &TreeFitConfig,
) -> Result<PolicyTree> {
    fit_tree(x, scores, lambda, &cfg.with_kind(FitterKind::Greedy))
}

pub fn fit_hybrid(
    x: ArrayView2<'_, f64>,
    scores: &ScoreMatrix,
    lambda: &WeightVector,
    cfg: &TreeFitConfig,
) -> Result<PolicyTree> {
    fit_tree(x, scores, lambda, &cfg.with_kind(FitterKind::Hybrid))
}

pub fn fit_optimal(
    x: ArrayView2<'_, f64>,
    scores: &ScoreMatrix,
    lambda: &WeightVector,
    cfg: &TreeFitConfig,
) -> Result<PolicyTree> {
    fit_tree(x, scores, lambda, &cfg.with_kind(FitterKind::Optimal))
}
