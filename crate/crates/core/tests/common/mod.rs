//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use mopol::data::ScoreMatrix;
use mopol::pareto::WeightVector;
use mopol::policytree::PolicyTree;
use ndarray::{Array2, Array3};
use rand::Rng;

/// Small instance whose scores and weights are multiples of 1/8, so every
/// partial sum over at most a few hundred rows is exact in f64.
pub struct Instance {
    pub x: Array2<f64>,
    pub scores: ScoreMatrix,
    pub lambda: WeightVector,
}

pub fn dyadic_instance<R: Rng>(rng: &mut R, n: usize, p: usize, d: usize, n_y: usize) -> Instance {
    let x = Array2::from_shape_fn((n, p), |_| f64::from(rng.random_range(-4i32..=4)) / 2.0);
    let s = Array3::from_shape_fn((n, d, n_y), |_| f64::from(rng.random_range(-16i32..=16)) / 8.0);
    let mut cuts: Vec<u32> = (0..n_y - 1).map(|_| rng.random_range(0..=8)).collect();
    cuts.sort_unstable();
    let mut lambda = Vec::with_capacity(n_y);
    let mut prev = 0;
    for &c in &cuts {
        lambda.push(f64::from(c - prev) / 8.0);
        prev = c;
    }
    lambda.push(f64::from(8 - prev) / 8.0);
    Instance {
        x,
        scores: ScoreMatrix::new(s).unwrap(),
        lambda: WeightVector::new(lambda).unwrap(),
    }
}

/// Per-row weighted rewards, computed directly.
pub fn rewards(scores: &ScoreMatrix, lambda: &WeightVector) -> Vec<Vec<f64>> {
    (0..scores.n())
        .map(|i| {
            (0..scores.n_treatments())
                .map(|w| {
                    (0..scores.n_outcomes())
                        .map(|y| lambda.as_slice()[y] * scores.get(i, w, y))
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Summed weighted reward of `tree`, by a plain loop.
pub fn tree_sum(tree: &PolicyTree, x: &Array2<f64>, r: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (i, row) in x.rows().into_iter().enumerate() {
        let row: Vec<f64> = row.to_vec();
        s += r[i][tree.predict(&row)];
    }
    s
}

/// Midpoints between consecutive distinct values of every feature.
pub fn global_splits(x: &Array2<f64>) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for j in 0..x.ncols() {
        let mut v: Vec<f64> = x.column(j).to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        for w in v.windows(2) {
            out.push((j, (w[0] + w[1]) / 2.0));
        }
    }
    out
}

/// Maximum summed reward over every tree of depth at most `depth`, found by
/// enumerating each combination of split candidates and leaf assignments.
/// A split that sends no row to one side, or equal leaves on both sides,
/// reproduces every shallower tree, so full-depth shapes suffice.
pub fn brute_force_max(x: &Array2<f64>, r: &[Vec<f64>], depth: usize) -> f64 {
    let n = x.nrows();
    let d = r.first().map_or(1, Vec::len);
    let mut splits = global_splits(x);
    // a split no row can satisfy stands in for "no split" when a feature is constant
    splits.push((0, f64::INFINITY));
    let leaves = 1usize << depth;
    let mut best = f64::NEG_INFINITY;
    let shapes = splits.len().pow(((1usize << depth) - 1) as u32);
    for code in 0..shapes {
        // heap-ordered internal nodes
        let mut c = code;
        let mut node_split = Vec::with_capacity(leaves - 1);
        for _ in 0..leaves - 1 {
            node_split.push(splits[c % splits.len()]);
            c /= splits.len();
        }
        let mut sums = vec![vec![0.0; d]; leaves];
        for i in 0..n {
            let mut node = 0;
            for _ in 0..depth {
                let (j, t) = node_split[node];
                node = 2 * node + if x[[i, j]] <= t { 1 } else { 2 };
            }
            let leaf = node + 1 - leaves;
            for w in 0..d {
                sums[leaf][w] += r[i][w];
            }
        }
        for assign in 0..d.pow(leaves as u32) {
            let mut a = assign;
            let mut total = 0.0;
            for sum in &sums {
                total += sum[a % d];
                a /= d;
            }
            if total > best {
                best = total;
            }
        }
    }
    best
}

/// Solve `a x = b` for every column of `b` by Gauss-Jordan elimination with
/// partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        let d = a[c][c];
        for j in 0..n {
            a[c][j] /= d;
        }
        for v in b[c].iter_mut() {
            *v /= d;
        }
        for i in 0..n {
            if i != c {
                let f = a[i][c];
                if f != 0.0 {
                    for j in 0..n {
                        a[i][j] -= f * a[c][j];
                    }
                    for k in 0..b[i].len() {
                        b[i][k] -= f * b[c][k];
                    }
                }
            }
        }
    }
    b
}

pub fn matern52(a: &[f64], b: &[f64], ls: &[f64], sv: f64) -> f64 {
    let mut r2 = 0.0;
    for k in 0..a.len() {
        r2 += ((a[k] - b[k]) / ls[k]).powi(2);
    }
    let r = (5.0f64 * r2).sqrt();
    sv * (1.0 + r + r * r / 3.0) * (-r).exp()
}

/// GP posterior mean and covariance at `probes` computed from scratch with a
/// dense solve: targets standardized by `(shift, scale)`, constant mean by
/// generalized least squares, noise variances in target units.
#[allow(clippy::too_many_arguments)]
pub fn gp_oracle(
    inputs: &[Vec<f64>],
    targets: &[f64],
    noise_var: &[f64],
    ls: &[f64],
    sv: f64,
    jitter: f64,
    (shift, scale): (f64, f64),
    probes: &[Vec<f64>],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = inputs.len();
    let m = probes.len();
    let y: Vec<f64> = targets.iter().map(|t| (t - shift) / scale).collect();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut v = matern52(&inputs[i], &inputs[j], ls, sv);
                    if i == j {
                        v += noise_var[i] / (scale * scale) + jitter;
                    }
                    v
                })
                .collect()
        })
        .collect();
    // right-hand sides: y, ones, and the probe cross-kernels
    let rhs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![y[i], 1.0];
            row.extend(probes.iter().map(|p| matern52(&inputs[i], p, ls, sv)));
            row
        })
        .collect();
    let sol = dense_solve(k, rhs);
    let kiy: f64 = (0..n).map(|i| sol[i][0]).sum();
    let ki1: f64 = (0..n).map(|i| sol[i][1]).sum();
    let mu = kiy / ki1;
    let mut mean = vec![0.0; m];
    let mut cov = vec![vec![0.0; m]; m];
    for a in 0..m {
        // k_a' K^-1 (y - mu 1)
        let mut s = 0.0;
        for i in 0..n {
            s += matern52(&inputs[i], &probes[a], ls, sv) * (sol[i][0] - mu * sol[i][1]);
        }
        mean[a] = shift + scale * (mu + s);
        for b in 0..m {
            let mut q = 0.0;
            for i in 0..n {
                q += matern52(&inputs[i], &probes[a], ls, sv) * sol[i][2 + b];
            }
            cov[a][b] = scale * scale * (matern52(&probes[a], &probes[b], ls, sv) - q);
        }
    }
    (mean, cov)
}

fn simpson_rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Integrate over `[a, b]`, splitting at the given kink locations.
pub fn simpson_pieces(f: &dyn Fn(f64) -> f64, a: f64, b: f64, kinks: &[f64], tol: f64) -> f64 {
    let mut cuts = vec![a];
    cuts.extend(kinks.iter().copied().filter(|&k| k > a && k < b));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2).map(|w| simpson(f, w[0], w[1], tol)).sum()
}

pub fn normal_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Expected hypervolume improvement of an independent Gaussian point
/// `N(mu, diag(sd^2))` over the single-point front `{q}` with reference `r`,
/// by nested adaptive quadrature.
pub fn ehvi_quadrature(mu: [f64; 2], sd: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    let hvi = |y1: f64, y2: f64| {
        if y1 <= r[0] || y2 <= r[1] {
            return 0.0;
        }
        (y1 - r[0]) * (y2 - r[1]) - (y1.min(q[0]) - r[0]).max(0.0) * (y2.min(q[1]) - r[1]).max(0.0)
    };
    let hi1 = mu[0] + 12.0 * sd[0];
    let hi2 = mu[1] + 12.0 * sd[1];
    let inner = |y1: f64| {
        let g = |y2: f64| hvi(y1, y2) * normal_pdf(y2, mu[1], sd[1]);
        simpson_pieces(&g, r[1], hi2.max(r[1]), &[q[1]], 1e-11) * normal_pdf(y1, mu[0], sd[0])
    };
    simpson_pieces(&inner, r[0], hi1.max(r[0]), &[q[0]], 1e-10)
}

/// Monte-Carlo hypervolume with `samples` uniform draws in the bounding box
/// `[r, max p]`. Returns the estimate and its standard error.
pub fn hypervolume_mc<R: Rng>(rng: &mut R, pts: &[Vec<f64>], r: &[f64], samples: usize) -> (f64, f64) {
    let k = r.len();
    let hi: Vec<f64> = (0..k)
        .map(|j| pts.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let vol: f64 = hi.iter().zip(r).map(|(h, l)| h - l).product();
    let mut u = vec![0.0; k];
    let mut hits = 0usize;
    for _ in 0..samples {
        for j in 0..k {
            u[j] = r[j] + rng.random::<f64>() * (hi[j] - r[j]);
        }
        if pts.iter().any(|p| p.iter().zip(&u).all(|(a, b)| a >= b)) {
            hits += 1;
        }
    }
    let f = hits as f64 / samples as f64;
    (vol * f, vol * (f * (1.0 - f) / samples as f64).sqrt())
}
