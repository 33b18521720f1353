use std::path::Path;
use std::time::Instant;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bootstrap_se, Budget, MopolConfig};
use crate::acquisition::{propose_candidates, AcquisitionConfig};
use crate::data::ScoreMatrix;
use crate::error::{MopolError, Result};
use crate::pareto::{hypervolume, reference_point, EvaluatedPoint, ParetoSet, WeightVector};
use crate::policytree::{fit_tree, outcome_values};
use crate::rng;
use crate::surrogate::{gp_fit, sobol_init, Observation};

const SOBOL_STREAM: u64 = 0x5b01;
const ACQUISITION_STREAM: u64 = 0xac01;
const EVALUATION_STREAM: u64 = 0xe7a1;

/// One evaluated weight vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub lambda: Vec<f64>,
    pub values: Vec<f64>,
    pub ses: Vec<f64>,
    /// Full-sample tree fit.
    pub fit_seconds: f64,
    pub bootstrap_seconds: f64,
    /// Surrogate refit plus proposal; zero for initialization points. A batch
    /// proposal is charged to its first record.
    pub acquisition_seconds: f64,
    /// NEHVI estimate when the point was proposed.
    pub acquisition_value: Option<f64>,
    /// Frontier hypervolume after this evaluation, against the run's final
    /// reference point.
    pub hypervolume: f64,
}

impl TraceRecord {
    pub fn total_seconds(&self) -> f64 {
        self.fit_seconds + self.bootstrap_seconds + self.acquisition_seconds
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn hypervolumes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.hypervolume).collect()
    }

    /// One row per iteration.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let n_y = self.records.first().map_or(0, |r| r.values.len());
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["iteration".to_string()];
        header.extend((0..n_y).map(|y| format!("lambda_{y}")));
        header.extend((0..n_y).map(|y| format!("value_{y}")));
        header.extend((0..n_y).map(|y| format!("se_{y}")));
        header.extend(
            [
                "fit_seconds",
                "bootstrap_seconds",
                "acquisition_seconds",
                "acquisition_value",
                "hypervolume",
            ]
            .map(String::from),
        );
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.iteration.to_string()];
            row.extend(r.lambda.iter().chain(&r.values).chain(&r.ses).map(|v| v.to_string()));
            row.push(r.fit_seconds.to_string());
            row.push(r.bootstrap_seconds.to_string());
            row.push(r.acquisition_seconds.to_string());
            row.push(r.acquisition_value.map_or(String::new(), |v| v.to_string()));
            row.push(r.hypervolume.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| MopolError::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rd = csv::Reader::from_path(path)?;
        let header = rd.headers()?.clone();
        let n_y = header.iter().filter(|h| h.starts_with("lambda_")).count();
        if header.len() != 1 + 3 * n_y + 5 {
            return Err(MopolError::Parse(format!("{}: unexpected trace header", path.display())));
        }
        let num = |s: &str, row: usize| -> Result<f64> {
            s.parse()
                .map_err(|_| MopolError::Parse(format!("{}: row {row}: bad number '{s}'", path.display())))
        };
        let mut records = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let f: Vec<&str> = rec.iter().collect();
            let vals = |from: usize| -> Result<Vec<f64>> { f[from..from + n_y].iter().map(|s| num(s, i + 1)).collect() };
            let k = 1 + 3 * n_y;
            records.push(TraceRecord {
                iteration: f[0]
                    .parse()
                    .map_err(|_| MopolError::Parse(format!("{}: row {}: bad iteration", path.display(), i + 1)))?,
                lambda: vals(1)?,
                values: vals(1 + n_y)?,
                ses: vals(1 + 2 * n_y)?,
                fit_seconds: num(f[k], i + 1)?,
                bootstrap_seconds: num(f[k + 1], i + 1)?,
                acquisition_seconds: num(f[k + 2], i + 1)?,
                acquisition_value: if f[k + 3].is_empty() { None } else { Some(num(f[k + 3], i + 1)?) },
                hypervolume: num(f[k + 4], i + 1)?,
            });
        }
        Ok(RunTrace { records })
    }
}

/// Result of [`run_mopol`].
#[derive(Clone, Debug)]
pub struct MopolRun {
    pub pareto: ParetoSet,
    /// Every evaluation in order.
    pub evaluations: Vec<EvaluatedPoint>,
    pub trace: RunTrace,
    /// Reference point over all evaluations.
    pub reference: Vec<f64>,
    /// The budget ran out before the initialization points were exhausted.
    pub partial: bool,
    pub acquisition_calls: usize,
}

impl MopolRun {
    pub fn hypervolume(&self) -> f64 {
        self.trace.records.last().map_or(0.0, |r| r.hypervolume)
    }
}

/// The Sobol design evaluated before any acquisition.
pub fn initial_points(cfg: &MopolConfig, n_outcomes: usize) -> Result<Vec<WeightVector>> {
    sobol_init(n_outcomes, rng::derive_seed(cfg.seed, &[SOBOL_STREAM]))
}

/// Fit the tree at `lambda`, value it on the full sample and bootstrap its SEs.
fn evaluate(
    x: ArrayView2<'_, f64>,
    scores: &ScoreMatrix,
    lambda: &WeightVector,
    cfg: &MopolConfig,
    iteration: usize,
) -> Result<(EvaluatedPoint, f64)> {
    let t = Instant::now();
    let tree = fit_tree(x, scores, lambda, &cfg.tree)?;
    let fit_seconds = t.elapsed().as_secs_f64();
    let values = outcome_values(&tree, x, scores)?;
    let t = Instant::now();
    let seed = rng::derive_seed(cfg.seed, &[EVALUATION_STREAM, iteration as u64]);
    let ses = bootstrap_se(x, scores, lambda, &cfg.tree, cfg.replicates, cfg.se_mode, seed)?;
    let bootstrap_seconds = t.elapsed().as_secs_f64();
    Ok((
        EvaluatedPoint {
            lambda: lambda.clone(),
            values,
            ses,
            kind: cfg.tree.kind,
            fit_seconds,
            iteration,
            tree,
        },
        bootstrap_seconds,
    ))
}

/// Map the Pareto frontier of per-outcome policy values over weight vectors.
///
/// The Sobol initialization points are evaluated first, in order; after that
/// each step refits the surrogate on every evaluation and evaluates the
/// proposed batch. The loop stops when the budget is spent.
pub fn run_mopol(x: ArrayView2<'_, f64>, scores: &ScoreMatrix, cfg: &MopolConfig) -> Result<MopolRun> {
    cfg.validate(x.ncols())?;
    if x.nrows() != scores.n() {
        return Err(MopolError::invalid(format!(
            "covariates have {} rows but scores have {}",
            x.nrows(),
            scores.n()
        )));
    }
    let n_y = scores.n_outcomes();
    let budget = cfg.budget()?;
    let init = initial_points(cfg, n_y)?;
    let start = Instant::now();
    let spent = |done: usize| match budget {
        Budget::Iterations(n) => done >= n,
        Budget::Seconds(s) => start.elapsed().as_secs_f64() >= s,
    };

    let mut evaluations: Vec<EvaluatedPoint> = Vec::new();
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut acquisition_calls = 0;
    while !spent(evaluations.len()) {
        let done = evaluations.len();
        let (batch, acq_seconds, acq_values) = if done < init.len() {
            (vec![init[done].clone()], 0.0, vec![None])
        } else {
            let t = Instant::now();
            let obs: Vec<Observation> = evaluations
                .iter()
                .map(|e| Observation {
                    lambda: e.lambda.clone(),
                    values: e.values.clone(),
                    ses: e.ses.clone(),
                })
                .collect();
            let model = gp_fit(&obs)?;
            let reference = reference_point(evaluations.iter().map(|e| e.values.as_slice()))
                .expect("initialization produced evaluations");
            let seen: Vec<WeightVector> = evaluations.iter().map(|e| e.lambda.clone()).collect();
            let mut acq = AcquisitionConfig {
                seed: rng::derive_seed(cfg.seed, &[ACQUISITION_STREAM, cfg.acquisition.seed, done as u64]),
                ..cfg.acquisition.clone()
            };
            if let Budget::Iterations(n) = budget {
                acq.q = acq.q.min(n - done);
            }
            let proposal = propose_candidates(&model, &seen, &reference, &acq)?;
            acquisition_calls += 1;
            let values = proposal.scores.iter().map(|s| Some(s.mean)).collect();
            (proposal.candidates, t.elapsed().as_secs_f64(), values)
        };
        let results: Vec<Result<(EvaluatedPoint, f64)>> = batch
            .par_iter()
            .enumerate()
            .map(|(k, lambda)| evaluate(x, scores, lambda, cfg, done + k))
            .collect();
        for (k, res) in results.into_iter().enumerate() {
            let (pt, boot_seconds) = res?;
            log::info!(
                "iteration {}: lambda {:?}, acquisition value {}, acquisition seconds {:.4}, values {:?}",
                pt.iteration,
                pt.lambda.as_slice(),
                acq_values[k].map_or("-".to_string(), |v: f64| format!("{v:.6e}")),
                if k == 0 { acq_seconds } else { 0.0 },
                pt.values
            );
            records.push(TraceRecord {
                iteration: pt.iteration,
                lambda: pt.lambda.as_slice().to_vec(),
                values: pt.values.clone(),
                ses: pt.ses.clone(),
                fit_seconds: pt.fit_seconds,
                bootstrap_seconds: boot_seconds,
                acquisition_seconds: if k == 0 { acq_seconds } else { 0.0 },
                acquisition_value: acq_values[k],
                hypervolume: 0.0,
            });
            evaluations.push(pt);
        }
    }

    let reference = reference_point(evaluations.iter().map(|e| e.values.as_slice())).unwrap_or_else(|| vec![0.0; n_y]);
    let mut pareto = ParetoSet::new();
    for (e, r) in evaluations.iter().zip(records.iter_mut()) {
        pareto.insert(e.clone());
        r.hypervolume = hypervolume(&pareto.values(), &reference);
    }
    let partial = evaluations.len() < init.len();
    if partial {
        log::warn!(
            "budget exhausted after {} of {} initialization points",
            evaluations.len(),
            init.len()
        );
    }
    Ok(MopolRun {
        pareto,
        evaluations,
        trace: RunTrace { records },
        reference,
        partial,
        acquisition_calls,
    })
}

/// Per-outcome value and SE against the weights of every evaluation, sorted
/// by weight vector.
pub fn write_value_curve(evaluations: &[EvaluatedPoint], outcome_names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut pts: Vec<&EvaluatedPoint> = evaluations.iter().collect();
    pts.sort_by(|a, b| {
        a.lambda
            .as_slice()
            .partial_cmp(b.lambda.as_slice())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.iteration.cmp(&b.iteration))
    });
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = outcome_names.iter().map(|n| format!("lambda_{n}")).collect();
    header.extend(outcome_names.iter().map(|n| format!("value_{n}")));
    header.extend(outcome_names.iter().map(|n| format!("se_{n}")));
    header.push("iteration".into());
    w.write_record(&header)?;
    for p in pts {
        let cells: Vec<String> = p
            .lambda
            .as_slice()
            .iter()
            .chain(&p.values)
            .chain(&p.ses)
            .map(|v| v.to_string())
            .chain(std::iter::once(p.iteration.to_string()))
            .collect();
        w.write_record(&cells)?;
    }
    w.flush().map_err(|e| MopolError::io(path, e))
}
