//! Monte-Carlo noisy expected hypervolume improvement over the weight simplex.
//!
//! For each draw `s`, the latent per-outcome values at the baseline inputs
//! (every observed weight vector, plus earlier picks of a batch) are sampled
//! jointly from the GP posterior, giving a draw-specific frontier `F_s`. A
//! candidate is sampled jointly with the baseline and scored by
//! `HV(F_s + {candidate}) - HV(F_s)`; the score is the mean over draws.
//!
//! Baseline normals are shared by all candidates (common random numbers), and
//! each candidate's own normals come from a stream keyed by its coordinates, so
//! a score depends only on the candidate, the model and the seed.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MopolError, Result};
use crate::pareto::{dominates, hv_improvement, WeightVector};
use crate::rng;
use crate::surrogate::{cube_to_simplex, sobol_points, GpModel, MAX_DIMENSIONS};

const BASELINE_STREAM: u64 = 0xba5e;
const CANDIDATE_STREAM: u64 = 0xca4d;
const GRID_STREAM: u64 = 0x6e1d;
/// Coordinates closer than this count as the same candidate.
const DISTINCT_TOL: f64 = 1e-9;

fn default_mc_samples() -> usize {
    128
}
fn default_candidate_grid() -> usize {
    256
}
fn default_refine_steps() -> usize {
    20
}
fn default_q() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Joint posterior draws per score.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Points in the coarse candidate scan.
    #[serde(default = "default_candidate_grid")]
    pub candidate_grid: usize,
    /// Pattern-search iterations around the best grid point.
    #[serde(default = "default_refine_steps")]
    pub refine_steps: usize,
    /// Candidates proposed per call.
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            mc_samples: default_mc_samples(),
            candidate_grid: default_candidate_grid(),
            refine_steps: default_refine_steps(),
            q: default_q(),
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples < 16 {
            return Err(MopolError::invalid("acquisition.mc_samples must be at least 16"));
        }
        if self.q < 1 {
            return Err(MopolError::invalid("acquisition.q must be at least 1"));
        }
        if self.candidate_grid < 2 {
            return Err(MopolError::invalid("acquisition.candidate_grid must be at least 2"));
        }
        Ok(())
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub mean: f64,
    pub se: f64,
}

/// Lower-triangular factor of a positive semidefinite matrix, grown one row at
/// a time. A row whose conditional variance is below `tol` gets a zero pivot:
/// that point is a deterministic function of the earlier ones.
#[derive(Clone, Debug)]
struct SemiChol {
    rows: Vec<Vec<f64>>,
    tol: f64,
}

impl SemiChol {
    fn new(tol: f64) -> Self {
        SemiChol { rows: Vec::new(), tol }
    }

    /// Row of the factor for a new point with covariances `cross` to the
    /// existing points and variance `var`.
    fn row(&self, cross: &[f64], var: f64) -> Vec<f64> {
        let k = self.rows.len();
        let mut l = vec![0.0; k + 1];
        let mut ss = 0.0;
        for j in 0..k {
            let pivot = self.rows[j][j];
            if pivot > 0.0 {
                let dot: f64 = (0..j).map(|i| self.rows[j][i] * l[i]).sum();
                l[j] = (cross[j] - dot) / pivot;
                ss += l[j] * l[j];
            }
        }
        let rest = var - ss;
        l[k] = if rest > self.tol { rest.sqrt() } else { 0.0 };
        l
    }

    fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }
}

/// Joint posterior draws at the baseline inputs.
struct Baseline<'m> {
    model: &'m GpModel,
    points: Vec<Vec<f64>>,
    /// Per outcome: `L^-1 k(X_train, baseline)` from the GP.
    whitened: Vec<nalgebra::DMatrix<f64>>,
    factors: Vec<SemiChol>,
    /// `z[s][y][i]`: standard normals behind baseline point `i`.
    z: Vec<Vec<Vec<f64>>>,
    /// `values[s][i][y]`: sampled latent values.
    values: Vec<Vec<Vec<f64>>>,
    /// Non-dominated subset of `values[s]`.
    fronts: Vec<Vec<Vec<f64>>>,
    seed: u64,
    draws: usize,
}

fn coord_key(c: &[f64]) -> Vec<u64> {
    let mut k = vec![CANDIDATE_STREAM];
    k.extend(c.iter().map(|v| v.to_bits()));
    k
}

fn nondominated(pts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    pts.iter()
        .filter(|p| !pts.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect()
}

/// Conditional draw of one new point against a baseline.
struct Conditional {
    mean: Vec<f64>,
    rows: Vec<Vec<f64>>,
    key: Vec<u64>,
}

impl<'m> Baseline<'m> {
    fn new(model: &'m GpModel, observed: &[Vec<f64>], draws: usize, seed: u64) -> Self {
        let n_y = model.n_outcomes();
        let mut base = Baseline {
            model,
            points: Vec::new(),
            whitened: vec![nalgebra::DMatrix::zeros(0, 0); n_y],
            factors: model
                .outcomes
                .iter()
                .map(|g| {
                    let (_, scale) = g.standardization();
                    SemiChol::new(1e-10 * scale * scale * g.params().signal_variance)
                })
                .collect(),
            z: vec![vec![Vec::new(); n_y]; draws],
            values: vec![Vec::new(); draws],
            fronts: vec![Vec::new(); draws],
            seed,
            draws,
        };
        let mut normals = rng::stream(seed, &[BASELINE_STREAM]);
        let z_obs: Vec<Vec<Vec<f64>>> = (0..draws)
            .map(|_| {
                (0..n_y)
                    .map(|_| (0..observed.len()).map(|_| normals.sample(StandardNormal)).collect())
                    .collect()
            })
            .collect();
        // joint factor of the observed block
        for (y, g) in model.outcomes.iter().enumerate() {
            let (ks, v) = g.whiten(observed);
            let mean = g.mean_from_cross(&ks);
            let cov = g.cov_from_whitened(observed, &v, observed, &v);
            for i in 0..observed.len() {
                let cross: Vec<f64> = (0..i).map(|j| cov[(j, i)]).collect();
                let row = base.factors[y].row(&cross, cov[(i, i)]);
                base.factors[y].push(row);
            }
            for s in 0..draws {
                base.z[s][y] = z_obs[s][y].clone();
            }
            if y == 0 {
                for vals in base.values.iter_mut() {
                    *vals = vec![vec![0.0; n_y]; observed.len()];
                }
            }
            for s in 0..draws {
                for i in 0..observed.len() {
                    let row = &base.factors[y].rows[i];
                    let dot: f64 = row.iter().zip(&base.z[s][y]).map(|(a, b)| a * b).sum();
                    base.values[s][i][y] = mean[i] + dot;
                }
            }
            base.whitened[y] = v;
        }
        base.points = observed.to_vec();
        base.refresh_fronts();
        base
    }

    fn refresh_fronts(&mut self) {
        self.fronts = self.values.iter().map(|v| nondominated(v)).collect();
    }

    fn condition(&self, c: &[f64]) -> Conditional {
        let probe = [c.to_vec()];
        let mut mean = Vec::with_capacity(self.model.n_outcomes());
        let mut rows = Vec::with_capacity(self.model.n_outcomes());
        for (y, g) in self.model.outcomes.iter().enumerate() {
            let (ks, v) = g.whiten(&probe);
            mean.push(g.mean_from_cross(&ks)[0]);
            let cross = g.cov_from_whitened(&self.points, &self.whitened[y], &probe, &v);
            let var = g.cov_from_whitened(&probe, &v, &probe, &v)[(0, 0)];
            rows.push(self.factors[y].row(cross.as_slice(), var));
        }
        Conditional {
            mean,
            rows,
            key: coord_key(c),
        }
    }

    /// `own[s][y]`: the candidate's private normals.
    fn own_normals(&self, key: &[u64]) -> Vec<Vec<f64>> {
        let mut r = rng::stream(self.seed, key);
        let n_y = self.model.n_outcomes();
        (0..self.draws)
            .map(|_| (0..n_y).map(|_| r.sample(StandardNormal)).collect())
            .collect()
    }

    fn sample(&self, cond: &Conditional, s: usize, own: &[f64]) -> Vec<f64> {
        cond.rows
            .iter()
            .enumerate()
            .map(|(y, row)| {
                let k = row.len() - 1;
                let dot: f64 = row[..k].iter().zip(&self.z[s][y]).map(|(a, b)| a * b).sum();
                cond.mean[y] + dot + row[k] * own[y]
            })
            .collect()
    }

    fn score(&self, c: &[f64], reference: &[f64]) -> Score {
        let cond = self.condition(c);
        let own = self.own_normals(&cond.key);
        let hvi: Vec<f64> = (0..self.draws)
            .map(|s| {
                let p = self.sample(&cond, s, &own[s]);
                hv_improvement(&self.fronts[s], &p, reference)
            })
            .collect();
        let n = hvi.len() as f64;
        let mean = hvi.iter().sum::<f64>() / n;
        let var = hvi.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Score {
            mean,
            se: (var / n).sqrt(),
        }
    }

    /// Add a pending pick, fantasizing its values in every draw.
    fn extend(&mut self, c: &[f64]) {
        let cond = self.condition(c);
        let own = self.own_normals(&cond.key);
        for s in 0..self.draws {
            let p = self.sample(&cond, s, &own[s]);
            self.values[s].push(p);
            for (y, z) in self.z[s].iter_mut().enumerate() {
                z.push(own[s][y]);
            }
        }
        for (y, row) in cond.rows.into_iter().enumerate() {
            self.factors[y].push(row);
        }
        self.points.push(c.to_vec());
        for (y, g) in self.model.outcomes.iter().enumerate() {
            self.whitened[y] = g.whiten(&self.points).1;
        }
        self.refresh_fronts();
    }
}

fn check_inputs(model: &GpModel, observed: &[WeightVector], reference: &[f64]) -> Result<usize> {
    let n_y = model.n_outcomes();
    if reference.len() != n_y {
        return Err(MopolError::invalid(format!(
            "reference point has {} components for {n_y} outcomes",
            reference.len()
        )));
    }
    if observed.iter().any(|w| w.len() != n_y) {
        return Err(MopolError::invalid("observed weight vector of the wrong length"));
    }
    Ok(n_y)
}

fn coords(ws: &[WeightVector]) -> Vec<Vec<f64>> {
    ws.iter().map(|w| w.coords().to_vec()).collect()
}

/// NEHVI estimate for every candidate.
pub fn nehvi_score(
    model: &GpModel,
    observed: &[WeightVector],
    reference: &[f64],
    candidates: &[WeightVector],
    cfg: &AcquisitionConfig,
) -> Result<Vec<Score>> {
    cfg.validate()?;
    let n_y = check_inputs(model, observed, reference)?;
    if candidates.iter().any(|w| w.len() != n_y) {
        return Err(MopolError::invalid("candidate weight vector of the wrong length"));
    }
    let base = Baseline::new(model, &coords(observed), cfg.mc_samples, cfg.seed);
    Ok(candidates
        .par_iter()
        .map(|c| base.score(c.coords(), reference))
        .collect())
}

/// Coarse candidate set over simplex coordinates of dimension `dim`: an even
/// grid when `dim == 1`, otherwise the vertices plus shifted Sobol points.
pub fn candidate_grid(dim: usize, size: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if dim == 1 {
        return Ok((0..size).map(|i| vec![i as f64 / (size - 1) as f64]).collect());
    }
    if dim > MAX_DIMENSIONS {
        return Err(MopolError::invalid(format!("at most {} outcomes supported", MAX_DIMENSIONS + 1)));
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(size.max(dim + 1));
    out.push(vec![0.0; dim]);
    for j in 0..dim {
        let mut v = vec![0.0; dim];
        v[j] = 1.0;
        out.push(v);
    }
    let extra = size.saturating_sub(dim + 1);
    for u in sobol_points(extra, dim, Some(rng::derive_seed(seed, &[GRID_STREAM])))? {
        out.push(cube_to_simplex(&u)?.coords().to_vec());
    }
    Ok(out)
}

fn feasible(c: &[f64]) -> bool {
    c.iter().all(|&v| v >= 0.0) && c.iter().sum::<f64>() <= 1.0 + 1e-12
}

fn same(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= DISTINCT_TOL)
}

/// Pattern search on simplex coordinates, starting from `start`.
fn refine(
    base: &Baseline<'_>,
    reference: &[f64],
    start: (Vec<f64>, Score),
    step0: f64,
    steps: usize,
    taken: &[Vec<f64>],
) -> (Vec<f64>, Score) {
    let (mut x, mut fx) = start;
    let mut step = step0;
    for _ in 0..steps {
        let mut moves = Vec::with_capacity(2 * x.len());
        for j in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut c = x.clone();
                c[j] = (c[j] + dir * step).max(0.0);
                let over = c.iter().sum::<f64>() - 1.0;
                if over > 0.0 {
                    c[j] -= over;
                }
                if feasible(&c) && !same(&c, &x) && !taken.iter().any(|t| same(t, &c)) {
                    moves.push(c);
                }
            }
        }
        let scored: Vec<(Vec<f64>, Score)> = moves
            .into_par_iter()
            .map(|c| {
                let s = base.score(&c, reference);
                (c, s)
            })
            .collect();
        match scored.into_iter().max_by(|a, b| a.1.mean.total_cmp(&b.1.mean).then(b.0.partial_cmp(&a.0).unwrap())) {
            Some((c, s)) if s.mean > fx.mean => {
                x = c;
                fx = s;
            }
            _ => step *= 0.5,
        }
    }
    (x, fx)
}

/// Proposed weight vectors with their NEHVI estimates at selection time.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub candidates: Vec<WeightVector>,
    pub scores: Vec<Score>,
}

/// Choose `cfg.q` distinct weight vectors by grid scan and pattern search,
/// conditioning each later pick on fantasized values at the earlier ones.
pub fn propose_candidates(
    model: &GpModel,
    observed: &[WeightVector],
    reference: &[f64],
    cfg: &AcquisitionConfig,
) -> Result<Proposal> {
    cfg.validate()?;
    let n_y = check_inputs(model, observed, reference)?;
    let dim = n_y - 1;
    if dim == 0 {
        return Err(MopolError::invalid("proposal needs at least two outcomes"));
    }
    let grid = candidate_grid(dim, cfg.candidate_grid, cfg.seed)?;
    let step0 = if dim == 1 {
        1.0 / (cfg.candidate_grid - 1) as f64
    } else {
        0.5 * (cfg.candidate_grid as f64).powf(-1.0 / dim as f64)
    };
    let mut base = Baseline::new(model, &coords(observed), cfg.mc_samples, cfg.seed);
    let mut picks: Vec<Vec<f64>> = Vec::with_capacity(cfg.q);
    let mut scores = Vec::with_capacity(cfg.q);
    for _ in 0..cfg.q {
        let scored: Vec<Score> = grid.par_iter().map(|c| base.score(c, reference)).collect();
        // best grid point not already picked; first index wins ties
        let mut order: Vec<usize> = (0..grid.len()).filter(|&i| !picks.iter().any(|p| same(p, &grid[i]))).collect();
        order.sort_by(|&a, &b| scored[b].mean.total_cmp(&scored[a].mean).then(a.cmp(&b)));
        let Some(&top) = order.first() else {
            return Err(MopolError::invalid("candidate grid exhausted before q distinct picks"));
        };
        let (c, s) = refine(&base, reference, (grid[top].clone(), scored[top]), step0, cfg.refine_steps, &picks);
        base.extend(&c);
        picks.push(c);
        scores.push(s);
    }
    let candidates = picks
        .iter()
        .map(|c| WeightVector::from_coords(c))
        .collect::<Result<_>>()?;
    Ok(Proposal { candidates, scores })
}
