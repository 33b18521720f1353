//! Weight vectors, dominance, Pareto sets and hypervolume.
//!
//! Everything is oriented for maximization.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MopolError, Result};
use crate::policytree::{FitterKind, PolicyTree};

/// Tolerance on `sum(weights) == 1`.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the probability simplex weighting the outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(MopolError::OffSimplex("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(MopolError::OffSimplex(format!("negative or non-finite weight {w}")));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(MopolError::OffSimplex(format!("weights sum to {s}")));
        }
        Ok(WeightVector(weights))
    }

    pub fn one_hot(len: usize, at: usize) -> Self {
        let mut v = vec![0.0; len];
        v[at] = 1.0;
        WeightVector(v)
    }

    /// From the first `len - 1` simplex coordinates; the last weight is the remainder.
    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        let rest = 1.0 - coords.iter().sum::<f64>();
        let mut v = coords.to_vec();
        // absorb rounding so the remainder is never a tiny negative number
        v.push(if rest.abs() < 1e-12 { 0.0 } else { rest });
        Self::new(v)
    }

    /// The first `len - 1` components, which identify the point.
    pub fn coords(&self) -> &[f64] {
        &self.0[..self.0.len() - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = MopolError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        WeightVector::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Vec<f64> {
        w.0
    }
}

/// A weight vector with the per-outcome values and standard errors it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedPoint {
    pub lambda: WeightVector,
    pub values: Vec<f64>,
    pub ses: Vec<f64>,
    pub kind: FitterKind,
    /// Wall time of the single full-sample fit. Not serialized, so that frontier
    /// files are reproducible; timings live in the run trace.
    #[serde(skip)]
    pub fit_seconds: f64,
    pub iteration: usize,
    pub tree: PolicyTree,
}

/// `a` is at least as good everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Non-dominated evaluated points in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoSet {
    pub members: Vec<EvaluatedPoint>,
}

impl ParetoSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.members.iter().map(|m| m.values.clone()).collect()
    }

    /// Insert `pt` unless dominated; drop members it dominates. Returns whether it was kept.
    pub fn insert(&mut self, pt: EvaluatedPoint) -> bool {
        if self.members.iter().any(|m| dominates(&m.values, &pt.values)) {
            return false;
        }
        self.members.retain(|m| !dominates(&pt.values, &m.values));
        self.members.push(pt);
        true
    }
}

pub fn update_pareto(mut set: ParetoSet, pt: EvaluatedPoint) -> ParetoSet {
    set.insert(pt);
    set
}

/// Component-wise minimum minus 1% of each component's range.
///
/// A component with zero range is offset by 1% of `max(|min|, 1)` instead.
pub fn reference_point<'a>(points: impl IntoIterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut it = points.into_iter();
    let first = it.next()?;
    let mut lo = first.to_vec();
    let mut hi = first.to_vec();
    for p in it {
        for (k, &v) in p.iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    Some(
        lo.iter()
            .zip(&hi)
            .map(|(&l, &h)| {
                let range = h - l;
                let off = if range > 0.0 { range } else { l.abs().max(1.0) };
                l - 0.01 * off
            })
            .collect(),
    )
}

/// Lebesgue measure of the union of boxes `[reference, p]`.
///
/// Points not strictly above the reference in every component contribute nothing
/// and are skipped with a warning.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let kept: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| {
            let ok = p.iter().zip(reference).all(|(v, r)| v > r);
            if !ok {
                log::warn!("point {p:?} is not above reference {reference:?}; skipped");
            }
            ok
        })
        .cloned()
        .collect();
    hv_above(kept, reference)
}

pub fn frontier_hypervolume(set: &ParetoSet, reference: &[f64]) -> f64 {
    hypervolume(&set.values(), reference)
}

/// Hypervolume of points already known to lie strictly above `reference`.
pub(crate) fn hv_above(mut pts: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    match reference.len() {
        1 => pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) - reference[0],
        2 => hv2(&mut pts, reference),
        _ => hv_slice(pts, reference),
    }
}

/// Sweep in decreasing first coordinate.
fn hv2(pts: &mut [Vec<f64>], r: &[f64]) -> f64 {
    pts.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])));
    let mut area = 0.0;
    let mut best_y = r[1];
    for p in pts.iter() {
        if p[1] > best_y {
            area += (p[0] - r[0]) * (p[1] - best_y);
            best_y = p[1];
        }
    }
    area
}

/// Slice along the last coordinate and recurse on the remaining ones.
fn hv_slice(mut pts: Vec<Vec<f64>>, r: &[f64]) -> f64 {
    let k = r.len() - 1;
    pts.sort_by(|a, b| b[k].total_cmp(&a[k]));
    let mut vol = 0.0;
    let mut active: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
    for i in 0..pts.len() {
        active.push(pts[i][..k].to_vec());
        let next = if i + 1 < pts.len() { pts[i + 1][k] } else { r[k] };
        let depth = pts[i][k] - next;
        if depth > 0.0 {
            vol += depth * hv_above(nondominated(&active), &r[..k]);
        }
    }
    vol
}

fn nondominated(pts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    pts.iter()
        .filter(|p| !pts.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect()
}

/// Hypervolume gained by adding `p` to `front`: `vol[r, p] - HV({min(p, q)})`.
pub(crate) fn hv_improvement(front: &[Vec<f64>], p: &[f64], r: &[f64]) -> f64 {
    if p.iter().zip(r).any(|(v, rr)| v <= rr) {
        return 0.0;
    }
    let own: f64 = p.iter().zip(r).map(|(v, rr)| v - rr).product();
    let clipped: Vec<Vec<f64>> = front
        .iter()
        .map(|q| q.iter().zip(p).map(|(a, b)| a.min(*b)).collect::<Vec<f64>>())
        .filter(|q| q.iter().zip(r).all(|(v, rr)| v > rr))
        .collect();
    (own - hv_above(clipped, r)).max(0.0)
}

/// Frontier file contents: members, reference point and hypervolume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierReport {
    pub outcome_names: Vec<String>,
    pub reference: Vec<f64>,
    pub hypervolume: f64,
    pub points: Vec<EvaluatedPoint>,
}

impl FrontierReport {
    pub fn new(set: &ParetoSet, reference: Vec<f64>, outcome_names: Vec<String>) -> Self {
        FrontierReport {
            hypervolume: frontier_hypervolume(set, &reference),
            reference,
            outcome_names,
            points: set.members.clone(),
        }
    }

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

    /// One row per member: iteration, kind, weights, values, standard errors.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let n_y = self.reference.len();
        let file = File::create(path).map_err(|e| MopolError::io(path, e))?;
        let mut wtr = csv::Writer::from_writer(file);
        let mut header = vec!["iteration".to_string(), "kind".to_string()];
        header.extend((0..n_y).map(|y| format!("lambda_{y}")));
        header.extend(self.outcome_names.iter().map(|o| format!("value_{o}")));
        header.extend(self.outcome_names.iter().map(|o| format!("se_{o}")));
        wtr.write_record(&header)?;
        for p in &self.points {
            let mut row = vec![p.iteration.to_string(), p.kind.to_string()];
            row.extend(p.lambda.as_slice().iter().map(f64::to_string));
            row.extend(p.values.iter().map(f64::to_string));
            row.extend(p.ses.iter().map(f64::to_string));
            wtr.write_record(&row)?;
        }
        wtr.into_inner()
            .map_err(|e| MopolError::invalid(e.to_string()))?
            .flush()
            .map_err(|e| MopolError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn pt(values: Vec<f64>) -> EvaluatedPoint {
        let n = values.len();
        EvaluatedPoint {
            lambda: WeightVector::one_hot(n, 0),
            ses: vec![0.0; n],
            values,
            kind: FitterKind::Greedy,
            fit_seconds: 0.0,
            iteration: 0,
            tree: PolicyTree::leaf(0),
        }
    }

    fn brute_filter(all: &[Vec<f64>]) -> Vec<Vec<f64>> {
        // keep first occurrence among exact duplicates, matching sequential insertion
        let mut out: Vec<Vec<f64>> = Vec::new();
        for (i, p) in all.iter().enumerate() {
            let dominated = all.iter().any(|q| dominates(q, p));
            let dup = all[..i].iter().any(|q| q == p);
            if !dominated && !dup {
                out.push(p.clone());
            }
        }
        out
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[1.0, 1.0], &[0.0, 0.0]));
        assert!(!dominates(&[1.0, 0.0], &[0.0, 1.0]));
        assert!(!dominates(&[1.0, 1.0], &[1.0, 1.0]));
    }

    #[test]
    fn update_examples() {
        let s = update_pareto(ParetoSet::new(), pt(vec![0.0, 0.0]));
        let s = update_pareto(s, pt(vec![1.0, 1.0]));
        assert_eq!(s.values(), vec![vec![1.0, 1.0]]);

        let s = update_pareto(ParetoSet::new(), pt(vec![1.0, 0.0]));
        let s = update_pareto(s, pt(vec![0.0, 1.0]));
        assert_eq!(s.values(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn sequential_insert_matches_pairwise_filter() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let all: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.random_range(0..20) as f64, rng.random_range(0..20) as f64])
            .collect();
        let mut set = ParetoSet::new();
        for p in &all {
            set.insert(pt(p.clone()));
        }
        let mut got = set.values();
        let mut want = brute_filter(&all);
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // exact duplicates of a member are rejected by neither rule; compare as sets
        got.dedup();
        assert_eq!(got, want);
    }

    #[test]
    fn hypervolume_examples() {
        assert_eq!(hypervolume(&[], &[0.0, 0.0]), 0.0);
        assert_eq!(hypervolume(&[vec![1.0, 1.0]], &[0.0, 0.0]), 1.0);
        let pts = vec![vec![0.7, 0.5], vec![0.4, 0.8]];
        assert!((hypervolume(&pts, &[0.0, 0.0]) - (0.35 + 0.4 * 0.3)).abs() < 1e-15);
        // dominated and below-reference points change nothing
        let mut more = pts.clone();
        more.push(vec![0.3, 0.3]);
        more.push(vec![-1.0, 2.0]);
        assert!((hypervolume(&more, &[0.0, 0.0]) - 0.47).abs() < 1e-15);
    }

    #[test]
    fn three_dimensional_inclusion_exclusion() {
        let a = vec![2.0, 1.0, 1.0];
        let b = vec![1.0, 2.0, 1.0];
        let c = vec![1.0, 1.0, 2.0];
        // 3 boxes of volume 2, pairwise overlaps 1, triple overlap 1
        let hv = hypervolume(&[a, b, c], &[0.0, 0.0, 0.0]);
        assert!((hv - (6.0 - 3.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn reference_point_offsets_by_range() {
        let pts = [vec![0.0, 10.0], vec![1.0, 5.0]];
        let r = reference_point(pts.iter().map(|p| p.as_slice())).unwrap();
        assert!((r[0] + 0.01).abs() < 1e-15);
        assert!((r[1] - 4.95).abs() < 1e-12);
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.3, 0.7]).is_ok());
        assert!(WeightVector::new(vec![0.3, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.1, 1.1]).is_err());
        let w = WeightVector::from_coords(&[0.25]).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<WeightVector>("[0.5, 0.6]").is_err());
    }

    fn arb_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5i32..5, n).prop_map(|v| v.into_iter().map(f64::from).collect())
    }

    proptest! {
        #[test]
        fn dominance_is_strict_partial_order(a in arb_vec(3), b in arb_vec(3), c in arb_vec(3)) {
            prop_assert!(!dominates(&a, &a));
            if dominates(&a, &b) && dominates(&b, &c) {
                prop_assert!(dominates(&a, &c));
            }
            prop_assert!(!(dominates(&a, &b) && dominates(&b, &a)));
        }

        #[test]
        fn insertion_never_lowers_hypervolume(pts in proptest::collection::vec(arb_vec(2), 1..30)) {
            let r = vec![-6.0, -6.0];
            let mut set = ParetoSet::new();
            let mut last = 0.0;
            for p in pts {
                set.insert(pt(p));
                let hv = frontier_hypervolume(&set, &r);
                prop_assert!(hv >= last);
                last = hv;
            }
        }

        #[test]
        fn insertion_order_does_not_matter(pts in proptest::collection::vec(arb_vec(3), 1..25), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let collect = |v: &[Vec<f64>]| {
                let mut s = ParetoSet::new();
                for p in v { s.insert(pt(p.clone())); }
                let mut out = s.values();
                out.sort_by(|a, b| a.partial_cmp(b).unwrap());
                out.dedup();
                out
            };
            prop_assert_eq!(collect(&pts), collect(&shuffled));
        }

        #[test]
        fn singleton_volume_is_box(p in arb_vec(3)) {
            let r = vec![-6.0; 3];
            let want: f64 = p.iter().zip(&r).map(|(v, rr)| v - rr).product();
            prop_assert!((hypervolume(&[p], &r) - want).abs() < 1e-12);
        }

        #[test]
        fn improvement_matches_difference(front in proptest::collection::vec(arb_vec(3), 0..8), p in arb_vec(3)) {
            let r = vec![-6.0; 3];
            let mut with = front.clone();
            with.push(p.clone());
            let diff = hypervolume(&with, &r) - hypervolume(&front, &r);
            prop_assert!((hv_improvement(&front, &p, &r) - diff).abs() < 1e-9);
        }
    }
}
