use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::nelder_mead;
use crate::error::{MopolError, Result};
use crate::pareto::WeightVector;

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 10.0);
pub const SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (1e-6, 10.0);
const JITTERS: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// One evaluated weight vector: per-outcome values and their standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub lambda: WeightVector,
    pub values: Vec<f64>,
    pub ses: Vec<f64>,
}

/// Matérn 5/2 hyperparameters in standardized target units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
}

impl KernelParams {
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum();
        let r = (5.0 * r2).sqrt();
        self.signal_variance * (1.0 + r + r * r / 3.0) * (-r).exp()
    }

    fn matrix(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.kernel(&a[i], &b[j]))
    }
}

/// Hyperparameter search settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpFitOptions {
    /// Initial lengthscales, one local search each (all dimensions equal).
    pub start_lengthscales: Vec<f64>,
    pub max_evals: usize,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        GpFitOptions {
            start_lengthscales: vec![0.1, 0.4, 1.5],
            max_evals: 150,
        }
    }
}

/// Exact GP posterior for one outcome with heteroscedastic known noise.
///
/// Targets are standardized; the constant mean is the generalized
/// least-squares estimate under the current kernel.
#[derive(Clone, Debug)]
pub struct OutcomeGp {
    inputs: Vec<Vec<f64>>,
    shift: f64,
    scale: f64,
    params: KernelParams,
    mean: f64,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_likelihood: f64,
}

impl OutcomeGp {
    fn build(inputs: Vec<Vec<f64>>, targets: &[f64], noise_var: &[f64], params: KernelParams) -> Result<Self> {
        let n = targets.len() as f64;
        let shift = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|t| (t - shift).powi(2)).sum::<f64>() / n;
        let scale = if var.sqrt() > 1e-12 * shift.abs().max(1.0) { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| (t - shift) / scale));
        let noise: Vec<f64> = noise_var.iter().map(|v| v / (scale * scale)).collect();
        Self::factor(inputs, y, &noise, params, shift, scale)
    }

    fn factor(
        inputs: Vec<Vec<f64>>,
        y: DVector<f64>,
        noise: &[f64],
        params: KernelParams,
        shift: f64,
        scale: f64,
    ) -> Result<Self> {
        let n = y.len();
        let k = params.matrix(&inputs, &inputs);
        for &j in &JITTERS {
            let jitter = j * params.signal_variance;
            let mut kk = k.clone();
            for i in 0..n {
                kk[(i, i)] += noise[i] + jitter;
            }
            let Some(chol) = kk.cholesky() else { continue };
            let ones = DVector::from_element(n, 1.0);
            let ki1 = chol.solve(&ones);
            let kiy = chol.solve(&y);
            let mean = kiy.sum() / ki1.sum();
            let resid = y.add_scalar(-mean);
            let alpha = chol.solve(&resid);
            let logdet: f64 = chol.l_dirty().diagonal().iter().take(n).map(|d| d.ln()).sum::<f64>() * 2.0;
            let log_likelihood =
                -0.5 * resid.dot(&alpha) - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            return Ok(OutcomeGp {
                inputs,
                shift,
                scale,
                params,
                mean,
                jitter,
                chol,
                alpha,
                log_likelihood,
            });
        }
        Err(MopolError::Factorization { jitter: JITTERS[JITTERS.len() - 1] })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Constant prior mean in target units.
    pub fn constant_mean(&self) -> f64 {
        self.shift + self.scale * self.mean
    }

    /// Targets are standardized as `(t - shift) / scale`.
    pub fn standardization(&self) -> (f64, f64) {
        (self.shift, self.scale)
    }

    /// Diagonal jitter added to the kernel matrix, in standardized units.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Profiled log marginal likelihood of the standardized targets.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    /// `L^-1 k(X, probes)`, shared by the mean and covariance computations.
    pub(crate) fn whiten(&self, probes: &[Vec<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
        let ks = self.params.matrix(&self.inputs, probes);
        let v = self
            .chol
            .l_dirty()
            .lower_triangle()
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a positive diagonal");
        (ks, v)
    }

    /// Posterior means at `probes`, in target units.
    pub fn mean(&self, probes: &[Vec<f64>]) -> Vec<f64> {
        let ks = self.params.matrix(&self.inputs, probes);
        self.mean_from_cross(&ks)
    }

    pub(crate) fn mean_from_cross(&self, ks: &DMatrix<f64>) -> Vec<f64> {
        (ks.transpose() * &self.alpha)
            .iter()
            .map(|m| self.shift + self.scale * (self.mean + m))
            .collect()
    }

    /// Posterior covariance between latent values at `a` and `b`, given their
    /// whitened cross-kernels.
    pub(crate) fn cov_from_whitened(
        &self,
        a: &[Vec<f64>],
        va: &DMatrix<f64>,
        b: &[Vec<f64>],
        vb: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let s2 = self.scale * self.scale;
        (self.params.matrix(a, b) - va.transpose() * vb) * s2
    }

    /// Joint posterior mean and covariance at `probes`, in target units.
    pub fn joint(&self, probes: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
        let (ks, v) = self.whiten(probes);
        let mut cov = self.cov_from_whitened(probes, &v, probes, &v);
        cov = (&cov + cov.transpose()) * 0.5;
        (self.mean_from_cross(&ks), cov)
    }

    /// Posterior means and variances at `probes`, in target units.
    pub fn marginal(&self, probes: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let (ks, v) = self.whiten(probes);
        let s2 = self.scale * self.scale;
        let var = probes
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let prior = self.params.kernel(p, p);
                (s2 * (prior - v.column(j).norm_squared())).max(0.0)
            })
            .collect();
        (self.mean_from_cross(&ks), var)
    }
}

/// Independent GPs, one per outcome, over simplex coordinates.
#[derive(Clone, Debug)]
pub struct GpModel {
    pub outcomes: Vec<OutcomeGp>,
}

/// Joint posterior for one outcome.
#[derive(Clone, Debug)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

fn check(obs: &[Observation], min: usize) -> Result<(usize, usize)> {
    if obs.len() < min {
        return Err(MopolError::invalid(format!(
            "GP needs at least {min} observations, got {}",
            obs.len()
        )));
    }
    let n_y = obs[0].values.len();
    let dim = obs[0].lambda.len().saturating_sub(1);
    for (i, o) in obs.iter().enumerate() {
        if o.values.len() != n_y || o.ses.len() != n_y || o.lambda.len() != dim + 1 {
            return Err(MopolError::invalid(format!("observation {i} has inconsistent lengths")));
        }
        if o.values.iter().any(|v| !v.is_finite()) || o.ses.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(MopolError::invalid(format!(
                "observation {i} has a non-finite value or an invalid standard error"
            )));
        }
    }
    Ok((n_y, dim))
}

fn columns(obs: &[Observation], y: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    (
        obs.iter().map(|o| o.lambda.coords().to_vec()).collect(),
        obs.iter().map(|o| o.values[y]).collect(),
        obs.iter().map(|o| o.ses[y] * o.ses[y]).collect(),
    )
}

fn to_params(theta: &[f64]) -> Option<KernelParams> {
    let (lo, hi) = LENGTHSCALE_BOUNDS;
    let (slo, shi) = SIGNAL_VARIANCE_BOUNDS;
    let k = theta.len() - 1;
    let ls: Vec<f64> = theta[..k].iter().map(|t| t.exp()).collect();
    let sv = theta[k].exp();
    let inside = ls.iter().all(|l| (lo..=hi).contains(l)) && (slo..=shi).contains(&sv);
    inside.then_some(KernelParams {
        lengthscales: ls,
        signal_variance: sv,
    })
}

/// Fit one GP per outcome, choosing hyperparameters by maximizing the
/// marginal likelihood from a fixed set of starting points.
pub fn gp_fit(obs: &[Observation]) -> Result<GpModel> {
    gp_fit_with(obs, &GpFitOptions::default())
}

pub fn gp_fit_with(obs: &[Observation], opts: &GpFitOptions) -> Result<GpModel> {
    let (n_y, dim) = check(obs, 2)?;
    let mut outcomes = Vec::with_capacity(n_y);
    for y in 0..n_y {
        let (inputs, targets, noise) = columns(obs, y);
        let mut best: Option<OutcomeGp> = None;
        let mut objective = |theta: &[f64]| -> f64 {
            to_params(theta)
                .and_then(|p| OutcomeGp::build(inputs.clone(), &targets, &noise, p).ok())
                .map_or(f64::INFINITY, |g| -g.log_likelihood)
        };
        for &l0 in &opts.start_lengthscales {
            let mut x0 = vec![l0.ln(); dim];
            x0.push(0.0);
            let m = nelder_mead::minimize(&mut objective, &x0, 0.7, 1e-9, opts.max_evals);
            if !m.f.is_finite() {
                continue;
            }
            if best.as_ref().is_none_or(|b| -m.f > b.log_likelihood) {
                let p = to_params(&m.x).expect("finite objective implies in-bounds parameters");
                best = Some(OutcomeGp::build(inputs.clone(), &targets, &noise, p)?);
            }
        }
        let gp = match best {
            Some(g) => g,
            // fall back to a unit kernel, which escalates jitter or reports failure
            None => OutcomeGp::build(
                inputs,
                &targets,
                &noise,
                KernelParams {
                    lengthscales: vec![1.0; dim],
                    signal_variance: 1.0,
                },
            )?,
        };
        log::debug!(
            "outcome {y}: lengthscales {:?}, signal variance {:.4}, mean {:.4}",
            gp.params.lengthscales,
            gp.params.signal_variance,
            gp.constant_mean()
        );
        outcomes.push(gp);
    }
    Ok(GpModel { outcomes })
}

impl GpModel {
    /// Condition on `obs` with fixed hyperparameters, one set per outcome.
    pub fn with_hyperparameters(obs: &[Observation], params: Vec<KernelParams>) -> Result<Self> {
        let (n_y, dim) = check(obs, 1)?;
        if params.len() != n_y {
            return Err(MopolError::invalid(format!("{} parameter sets for {n_y} outcomes", params.len())));
        }
        let outcomes = params
            .into_iter()
            .enumerate()
            .map(|(y, p)| {
                if p.lengthscales.len() != dim || p.lengthscales.iter().any(|l| !(*l > 0.0)) || !(p.signal_variance > 0.0) {
                    return Err(MopolError::invalid(format!("invalid kernel parameters for outcome {y}")));
                }
                let (inputs, targets, noise) = columns(obs, y);
                OutcomeGp::build(inputs, &targets, &noise, p)
            })
            .collect::<Result<_>>()?;
        Ok(GpModel { outcomes })
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    /// Joint posterior per outcome at `probes`.
    pub fn posterior(&self, probes: &[WeightVector]) -> Vec<Posterior> {
        let pts: Vec<Vec<f64>> = probes.iter().map(|w| w.coords().to_vec()).collect();
        self.outcomes
            .iter()
            .map(|g| {
                let (mean, cov) = g.joint(&pts);
                Posterior { mean, cov }
            })
            .collect()
    }
}
