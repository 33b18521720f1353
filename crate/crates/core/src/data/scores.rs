use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use serde::Deserialize;

use super::Dataset;
use crate::error::{MopolError, Result};

pub const DEFAULT_PROPENSITY_FLOOR: f64 = 1e-3;

/// Outcome-model predictions `m[i, w, y]` and propensities `e[i, w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceEstimates {
    pub outcome_model: Array3<f64>,
    pub propensities: Array2<f64>,
}

impl NuisanceEstimates {
    pub fn validate(&self) -> Result<()> {
        let (n, d, _) = self.outcome_model.dim();
        if self.propensities.dim() != (n, d) {
            return Err(MopolError::invalid(format!(
                "propensity shape {:?} does not match outcome model ({n}, {d})",
                self.propensities.dim()
            )));
        }
        if self.outcome_model.iter().any(|v| !v.is_finite()) {
            return Err(MopolError::invalid("outcome model has non-finite entries"));
        }
        for (i, row) in self.propensities.axis_iter(Axis(0)).enumerate() {
            if row.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
                return Err(MopolError::invalid(format!(
                    "row {i}: propensities must lie strictly in (0, 1)"
                )));
            }
            let s: f64 = row.sum();
            if (s - 1.0).abs() > 1e-8 {
                return Err(MopolError::invalid(format!(
                    "row {i}: propensities sum to {s}, not 1"
                )));
            }
        }
        Ok(())
    }

    /// Write `row,treatment,outcome,mhat` and `row,treatment,ehat` files.
    pub fn write_csv(&self, mhat: impl AsRef<Path>, ehat: impl AsRef<Path>) -> Result<()> {
        let (n, d, n_y) = self.outcome_model.dim();
        write_rows(mhat.as_ref(), &["row", "treatment", "outcome", "mhat"], |wtr| {
            for i in 0..n {
                for w in 0..d {
                    for y in 0..n_y {
                        let v = self.outcome_model[[i, w, y]];
                        wtr.write_record([
                            i.to_string(),
                            w.to_string(),
                            y.to_string(),
                            v.to_string(),
                        ])?;
                    }
                }
            }
            Ok(())
        })?;
        write_rows(ehat.as_ref(), &["row", "treatment", "ehat"], |wtr| {
            for i in 0..n {
                for w in 0..d {
                    let v = self.propensities[[i, w]];
                    wtr.write_record([i.to_string(), w.to_string(), v.to_string()])?;
                }
            }
            Ok(())
        })
    }

    pub fn read_csv(mhat: impl AsRef<Path>, ehat: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct M {
            row: usize,
            treatment: usize,
            outcome: usize,
            mhat: f64,
        }
        #[derive(Deserialize)]
        struct E {
            row: usize,
            treatment: usize,
            ehat: f64,
        }
        let ms: Vec<M> = read_rows(mhat.as_ref())?;
        let es: Vec<E> = read_rows(ehat.as_ref())?;
        let outcome_model = dense3(
            ms.iter().map(|m| ([m.row, m.treatment, m.outcome], m.mhat)),
            "outcome-model",
        )?;
        let e3 = dense3(es.iter().map(|e| ([e.row, e.treatment, 0], e.ehat)), "propensity")?;
        let propensities = e3.index_axis_move(Axis(2), 0);
        let nuis = NuisanceEstimates {
            outcome_model,
            propensities,
        };
        nuis.validate()?;
        Ok(nuis)
    }
}

/// Doubly-robust scores `scores[i, w, y]`, one per unit, treatment and outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    scores: Array3<f64>,
}

impl ScoreMatrix {
    pub fn new(scores: Array3<f64>) -> Result<Self> {
        let (n, d, n_y) = scores.dim();
        if n == 0 || d < 2 || n_y == 0 {
            return Err(MopolError::invalid(format!(
                "score tensor must be n>=1, d>=2, outcomes>=1; got ({n}, {d}, {n_y})"
            )));
        }
        if let Some(v) = scores.iter().find(|v| !v.is_finite()) {
            return Err(MopolError::invalid(format!("non-finite score {v}")));
        }
        Ok(ScoreMatrix { scores })
    }

    pub fn n(&self) -> usize {
        self.scores.dim().0
    }

    pub fn n_treatments(&self) -> usize {
        self.scores.dim().1
    }

    pub fn n_outcomes(&self) -> usize {
        self.scores.dim().2
    }

    #[inline]
    pub fn get(&self, i: usize, w: usize, y: usize) -> f64 {
        self.scores[[i, w, y]]
    }

    pub fn as_array(&self) -> &Array3<f64> {
        &self.scores
    }

    /// Rows `idx` in order, repetitions allowed.
    pub fn select_rows(&self, idx: &[usize]) -> ScoreMatrix {
        ScoreMatrix {
            scores: self.scores.select(Axis(0), idx),
        }
    }

    /// Row-major `n x d` rewards `sum_y weights[y] * scores[i, w, y]`.
    pub fn weighted_rewards(&self, weights: &[f64]) -> Vec<f64> {
        let (n, d, n_y) = self.scores.dim();
        assert_eq!(weights.len(), n_y, "weight length must equal outcome count");
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            for w in 0..d {
                let mut acc = 0.0;
                for (y, &l) in weights.iter().enumerate() {
                    acc += l * self.scores[[i, w, y]];
                }
                out.push(acc);
            }
        }
        out
    }

    /// Write the dense `row,treatment,outcome,score` CSV.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let (n, d, n_y) = self.scores.dim();
        write_rows(path.as_ref(), &["row", "treatment", "outcome", "score"], |wtr| {
            for i in 0..n {
                for w in 0..d {
                    for y in 0..n_y {
                        wtr.write_record([
                            i.to_string(),
                            w.to_string(),
                            y.to_string(),
                            self.scores[[i, w, y]].to_string(),
                        ])?;
                    }
                }
            }
            Ok(())
        })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct S {
            row: usize,
            treatment: usize,
            outcome: usize,
            score: f64,
        }
        let rows: Vec<S> = read_rows(path.as_ref())?;
        let scores = dense3(rows.iter().map(|s| ([s.row, s.treatment, s.outcome], s.score)), "score")?;
        ScoreMatrix::new(scores)
    }
}

/// One AIPW term: `m + 1{treated} * (y - m) / e`.
#[inline]
pub fn aipw_term(mhat: f64, outcome: f64, ehat: f64, treated: bool) -> f64 {
    if treated {
        mhat + (outcome - mhat) / ehat
    } else {
        mhat
    }
}

/// Augmented inverse-propensity-weighted scores for every unit, treatment and outcome.
pub fn aipw_scores(
    data: &Dataset,
    nuisance: &NuisanceEstimates,
    propensity_floor: f64,
) -> Result<ScoreMatrix> {
    let n = data.n();
    let d = data.n_treatments;
    let n_y = data.n_outcomes();
    if nuisance.outcome_model.dim() != (n, d, n_y) {
        return Err(MopolError::invalid(format!(
            "outcome model shape {:?} does not match dataset ({n}, {d}, {n_y})",
            nuisance.outcome_model.dim()
        )));
    }
    nuisance.validate()?;
    let low: Vec<usize> = nuisance
        .propensities
        .axis_iter(Axis(0))
        .enumerate()
        .filter(|(_, row)| row.iter().any(|&e| e <= propensity_floor))
        .map(|(i, _)| i)
        .collect();
    if !low.is_empty() {
        return Err(MopolError::PropensityFloor {
            floor: propensity_floor,
            rows: low,
        });
    }

    let mut scores = Array3::zeros((n, d, n_y));
    for i in 0..n {
        let wi = data.treatments[i];
        for w in 0..d {
            let e = nuisance.propensities[[i, w]];
            for y in 0..n_y {
                scores[[i, w, y]] =
                    aipw_term(nuisance.outcome_model[[i, w, y]], data.outcomes[[i, y]], e, wi == w);
            }
        }
    }
    ScoreMatrix::new(scores)
}

fn write_rows(
    path: &Path,
    header: &[&str],
    body: impl FnOnce(&mut csv::Writer<File>) -> Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| MopolError::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record(header)?;
    body(&mut wtr)?;
    wtr.into_inner()
        .map_err(|e| MopolError::invalid(e.to_string()))?
        .flush()
        .map_err(|e| MopolError::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| MopolError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Assemble a dense tensor from indexed entries; every cell exactly once.
fn dense3(entries: impl Iterator<Item = ([usize; 3], f64)> + Clone, what: &str) -> Result<Array3<f64>> {
    let mut dims = [0usize; 3];
    let mut count = 0usize;
    for (ix, _) in entries.clone() {
        for k in 0..3 {
            dims[k] = dims[k].max(ix[k] + 1);
        }
        count += 1;
    }
    if count == 0 {
        return Err(MopolError::invalid(format!("{what} file is empty")));
    }
    let mut arr = Array3::from_elem((dims[0], dims[1], dims[2]), f64::NAN);
    let mut filled = Array3::from_elem((dims[0], dims[1], dims[2]), false);
    for (ix, v) in entries {
        if filled[ix] {
            return Err(MopolError::invalid(format!("{what} entry {ix:?} appears twice")));
        }
        filled[ix] = true;
        arr[ix] = v;
    }
    if let Some((ix, _)) = filled.indexed_iter().find(|(_, f)| !**f) {
        return Err(MopolError::invalid(format!(
            "{what} file is not dense: entry {:?} missing",
            [ix.0, ix.1, ix.2]
        )));
    }
    Ok(arr)
}
