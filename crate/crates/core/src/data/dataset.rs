use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{MopolError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Covariate,
    Treatment,
    Outcome,
}

/// Column name to role. Columns not listed are ignored on load.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    pub roles: BTreeMap<String, Role>,
}

impl Schema {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MopolError::io(path, e))?;
        let schema: Schema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let count = |r: Role| self.roles.values().filter(|&&v| v == r).count();
        if count(Role::Treatment) != 1 {
            return Err(MopolError::invalid(
                "schema must name exactly one treatment column",
            ));
        }
        if count(Role::Outcome) == 0 {
            return Err(MopolError::invalid("schema must name at least one outcome column"));
        }
        if count(Role::Covariate) == 0 {
            return Err(MopolError::invalid(
                "schema must name at least one covariate column",
            ));
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| MopolError::io(path, e))
    }
}

/// Notes recorded while loading, e.g. treatment relabeling.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Original label of each treatment index.
    pub treatment_labels: Vec<i64>,
    pub warnings: Vec<String>,
}

/// Covariates, treatments and outcomes for `n` units.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub covariates: Array2<f64>,
    pub treatments: Vec<usize>,
    pub outcomes: Array2<f64>,
    pub covariate_names: Vec<String>,
    pub treatment_name: String,
    pub outcome_names: Vec<String>,
    pub n_treatments: usize,
    pub provenance: Provenance,
}

impl Dataset {
    /// Build a dataset from already-indexed treatments `0..n_treatments`.
    pub fn new(
        covariates: Array2<f64>,
        treatments: Vec<usize>,
        outcomes: Array2<f64>,
        n_treatments: usize,
    ) -> Result<Self> {
        let p = covariates.ncols();
        let n_y = outcomes.ncols();
        let ds = Dataset {
            covariate_names: (0..p).map(|j| format!("x{j}")).collect(),
            treatment_name: "w".to_string(),
            outcome_names: (0..n_y).map(|y| format!("y{y}")).collect(),
            provenance: Provenance {
                treatment_labels: (0..n_treatments as i64).collect(),
                warnings: Vec::new(),
            },
            covariates,
            treatments,
            outcomes,
            n_treatments,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.treatments.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.treatments.len();
        if n == 0 {
            return Err(MopolError::invalid("dataset has no rows"));
        }
        if self.covariates.nrows() != n || self.outcomes.nrows() != n {
            return Err(MopolError::invalid(format!(
                "row counts disagree: covariates {}, treatments {n}, outcomes {}",
                self.covariates.nrows(),
                self.outcomes.nrows()
            )));
        }
        if self.covariates.ncols() == 0 || self.outcomes.ncols() == 0 {
            return Err(MopolError::invalid("need at least one covariate and one outcome"));
        }
        if self.n_treatments < 2 {
            return Err(MopolError::invalid("need at least two treatments"));
        }
        if self.covariate_names.len() != self.covariates.ncols()
            || self.outcome_names.len() != self.outcomes.ncols()
        {
            return Err(MopolError::invalid("column names do not match matrix widths"));
        }
        let mut seen = vec![false; self.n_treatments];
        for (i, &w) in self.treatments.iter().enumerate() {
            if w >= self.n_treatments {
                return Err(MopolError::invalid(format!(
                    "row {i}: treatment {w} out of range 0..{}",
                    self.n_treatments
                )));
            }
            seen[w] = true;
        }
        if let Some(w) = seen.iter().position(|s| !s) {
            return Err(MopolError::invalid(format!("treatment {w} never appears")));
        }
        if let Some(v) = self
            .covariates
            .iter()
            .chain(self.outcomes.iter())
            .find(|v| !v.is_finite())
        {
            return Err(MopolError::invalid(format!("non-finite entry {v}")));
        }
        Ok(())
    }

    /// Rows `idx` (repetitions allowed) as a new dataset. Treatment arms absent
    /// from the subset are kept in `n_treatments`; no arm-coverage check is made.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            covariates: self.covariates.select(ndarray::Axis(0), idx),
            treatments: idx.iter().map(|&i| self.treatments[i]).collect(),
            outcomes: self.outcomes.select(ndarray::Axis(0), idx),
            covariate_names: self.covariate_names.clone(),
            treatment_name: self.treatment_name.clone(),
            outcome_names: self.outcome_names.clone(),
            n_treatments: self.n_treatments,
            provenance: self.provenance.clone(),
        }
    }

    /// Schema describing the layout written by [`Dataset::write_csv`].
    pub fn schema(&self) -> Schema {
        let mut roles = BTreeMap::new();
        for c in &self.covariate_names {
            roles.insert(c.clone(), Role::Covariate);
        }
        roles.insert(self.treatment_name.clone(), Role::Treatment);
        for o in &self.outcome_names {
            roles.insert(o.clone(), Role::Outcome);
        }
        Schema { roles }
    }

    /// Write covariates, treatment (original labels) and outcomes, in that order.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| MopolError::io(path, e))?;
        let mut wtr = csv::Writer::from_writer(file);
        let mut header: Vec<&str> = self.covariate_names.iter().map(String::as_str).collect();
        header.push(&self.treatment_name);
        header.extend(self.outcome_names.iter().map(String::as_str));
        wtr.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            record.clear();
            record.extend(self.covariates.row(i).iter().map(|v| v.to_string()));
            record.push(self.provenance.treatment_labels[self.treatments[i]].to_string());
            record.extend(self.outcomes.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&record)?;
        }
        wtr.into_inner()
            .map_err(|e| MopolError::invalid(e.to_string()))?
            .flush()
            .map_err(|e| MopolError::io(path, e))
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let s = raw.trim();
    let bad = |detail: &str| MopolError::BadCell {
        row,
        column: column.to_string(),
        detail: detail.to_string(),
    };
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Err(bad("missing"));
    }
    let v: f64 = s.parse().map_err(|_| bad(&format!("not a number: '{s}'")))?;
    if !v.is_finite() {
        return Err(bad("not finite"));
    }
    Ok(v)
}

/// Load a CSV with a header row, assigning columns by `schema`.
///
/// Treatment labels must be integers. They are mapped to `0..d` in sorted
/// order; if the original labels are not already `0..d` a warning is kept in
/// the provenance.
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    schema.validate()?;
    let file = File::open(path).map_err(|e| MopolError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    for name in schema.roles.keys() {
        if !headers.contains(name) {
            return Err(MopolError::invalid(format!(
                "schema column '{name}' not found in {}",
                path.display()
            )));
        }
    }
    let mut cov_cols = Vec::new();
    let mut out_cols = Vec::new();
    let mut treat_col = 0;
    for (c, h) in headers.iter().enumerate() {
        match schema.roles.get(h) {
            Some(Role::Covariate) => cov_cols.push(c),
            Some(Role::Outcome) => out_cols.push(c),
            Some(Role::Treatment) => treat_col = c,
            None => {}
        }
    }

    let mut cov = Vec::new();
    let mut out = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        for &c in &cov_cols {
            cov.push(parse_cell(rec.get(c).unwrap_or(""), row, &headers[c])?);
        }
        for &c in &out_cols {
            out.push(parse_cell(rec.get(c).unwrap_or(""), row, &headers[c])?);
        }
        let t = parse_cell(rec.get(treat_col).unwrap_or(""), row, &headers[treat_col])?;
        if t.fract() != 0.0 {
            return Err(MopolError::BadCell {
                row,
                column: headers[treat_col].clone(),
                detail: format!("treatment label {t} is not an integer"),
            });
        }
        raw_labels.push(t as i64);
    }
    let n = raw_labels.len();
    if n == 0 {
        return Err(MopolError::invalid(format!("{} has no data rows", path.display())));
    }

    let labels: Vec<i64> = raw_labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut warnings = Vec::new();
    let contiguous = labels.iter().enumerate().all(|(k, &l)| l == k as i64);
    if !contiguous {
        let msg = format!(
            "treatment labels {labels:?} relabeled to 0..{}",
            labels.len().saturating_sub(1)
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let treatments = raw_labels
        .iter()
        .map(|l| labels.binary_search(l).expect("label present"))
        .collect();

    let ds = Dataset {
        covariates: Array2::from_shape_vec((n, cov_cols.len()), cov)
            .map_err(|e| MopolError::invalid(e.to_string()))?,
        treatments,
        outcomes: Array2::from_shape_vec((n, out_cols.len()), out)
            .map_err(|e| MopolError::invalid(e.to_string()))?,
        covariate_names: cov_cols.iter().map(|&c| headers[c].clone()).collect(),
        treatment_name: headers[treat_col].clone(),
        outcome_names: out_cols.iter().map(|&c| headers[c].clone()).collect(),
        n_treatments: labels.len(),
        provenance: Provenance {
            treatment_labels: labels,
            warnings,
        },
    };
    ds.validate()?;
    Ok(ds)
}
