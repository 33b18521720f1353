//! Synthetic data-generating processes with known nuisance functions.
//!
//! A [`SynthSpec`] fixes the covariate distribution, the treatment-assignment
//! propensity and, per outcome, a baseline plus one effect function per
//! treatment. Potential outcomes are `baseline(x) + effect_w(x) + noise`, so the
//! true outcome model is `m_w(x) = baseline(x) + effect_w(x)`.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{aipw_scores, Dataset, NuisanceEstimates, ScoreMatrix};
use crate::error::{MopolError, Result};

/// One additive piece of a baseline or effect function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Constant { value: f64 },
    Linear { feature: usize, coef: f64 },
    /// `below` when `x[feature] <= threshold`, else `above`.
    Step {
        feature: usize,
        threshold: f64,
        below: f64,
        above: f64,
    },
    /// `coef * x[a] * x[b]`.
    Interaction { features: [usize; 2], coef: f64 },
}

impl Term {
    fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Constant { value } => value,
            Term::Linear { feature, coef } => coef * x[feature],
            Term::Step {
                feature,
                threshold,
                below,
                above,
            } => {
                if x[feature] <= threshold {
                    below
                } else {
                    above
                }
            }
            Term::Interaction { features: [a, b], coef } => coef * x[a] * x[b],
        }
    }

    fn max_feature(&self) -> Option<usize> {
        match *self {
            Term::Constant { .. } => None,
            Term::Linear { feature, .. } | Term::Step { feature, .. } => Some(feature),
            Term::Interaction { features: [a, b], .. } => Some(a.max(b)),
        }
    }
}

fn eval_terms(terms: &[Term], x: &[f64]) -> f64 {
    terms.iter().map(|t| t.eval(x)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Propensity {
    Constant { probabilities: Vec<f64> },
    /// Multinomial logit; one `[intercept, coef_0, .., coef_{p-1}]` row per treatment.
    Softmax { coefficients: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateDist {
    pub low: f64,
    pub high: f64,
    /// If set, draws are rounded to multiples of this step.
    #[serde(default)]
    pub resolution: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    #[serde(default)]
    pub baseline: Vec<Term>,
    /// One term list per treatment.
    pub effects: Vec<Vec<Term>>,
    pub noise_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub n_covariates: usize,
    pub n_treatments: usize,
    pub covariates: CovariateDist,
    pub propensity: Propensity,
    pub outcomes: Vec<OutcomeSpec>,
}

/// A generated sample with its oracle nuisances and scores.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub data: Dataset,
    pub nuisance: NuisanceEstimates,
    pub scores: ScoreMatrix,
}

impl SynthSpec {
    /// Two outcomes, two treatments, four covariates on a 0.01 grid in [-1, 1].
    ///
    /// Where `x0 <= 0` the treatment effect on the second outcome is the
    /// negative of the effect on the first; elsewhere both effects are mostly
    /// positive. Assignment is confounded through `x0` and `x2`.
    pub fn tradeoff(n: usize) -> SynthSpec {
        SynthSpec {
            n,
            n_covariates: 4,
            n_treatments: 2,
            covariates: CovariateDist {
                low: -1.0,
                high: 1.0,
                resolution: Some(0.01),
            },
            propensity: Propensity::Softmax {
                coefficients: vec![vec![0.0; 5], vec![0.0, 0.6, 0.0, -0.4, 0.0]],
            },
            outcomes: vec![
                OutcomeSpec {
                    name: "y0".into(),
                    baseline: vec![Term::Linear { feature: 2, coef: 0.5 }],
                    effects: vec![
                        vec![],
                        vec![
                            Term::Step {
                                feature: 0,
                                threshold: 0.0,
                                below: 1.0,
                                above: 0.2,
                            },
                            Term::Linear { feature: 1, coef: 0.5 },
                        ],
                    ],
                    noise_sd: 1.0,
                },
                OutcomeSpec {
                    name: "y1".into(),
                    baseline: vec![Term::Linear { feature: 3, coef: 0.5 }],
                    effects: vec![
                        vec![],
                        vec![
                            Term::Step {
                                feature: 0,
                                threshold: 0.0,
                                below: -1.0,
                                above: 0.4,
                            },
                            Term::Linear { feature: 1, coef: -0.5 },
                        ],
                    ],
                    noise_sd: 1.0,
                },
            ],
        }
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MopolError::io(path, e))?;
        let spec: SynthSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.n_covariates;
        let d = self.n_treatments;
        if self.n == 0 || p == 0 || d < 2 || self.outcomes.is_empty() {
            return Err(MopolError::invalid(
                "synthetic spec needs n >= 1, p >= 1, at least 2 treatments and 1 outcome",
            ));
        }
        if !(self.covariates.low < self.covariates.high) {
            return Err(MopolError::invalid("covariate range must satisfy low < high"));
        }
        if let Some(r) = self.covariates.resolution {
            if !(r > 0.0) {
                return Err(MopolError::invalid("covariate resolution must be positive"));
            }
        }
        match &self.propensity {
            Propensity::Constant { probabilities } => {
                if probabilities.len() != d {
                    return Err(MopolError::invalid("one propensity per treatment required"));
                }
                if probabilities.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
                    return Err(MopolError::invalid(
                        "degenerate propensity: constant probabilities must lie strictly in (0, 1)",
                    ));
                }
                let s: f64 = probabilities.iter().sum();
                if (s - 1.0).abs() > 1e-8 {
                    return Err(MopolError::invalid(format!("propensities sum to {s}")));
                }
            }
            Propensity::Softmax { coefficients } => {
                if coefficients.len() != d || coefficients.iter().any(|c| c.len() != p + 1) {
                    return Err(MopolError::invalid(
                        "softmax propensity needs one [intercept, coefs..] row of length p+1 per treatment",
                    ));
                }
                if coefficients.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(MopolError::invalid("non-finite propensity coefficient"));
                }
            }
        }
        for o in &self.outcomes {
            if o.effects.len() != d {
                return Err(MopolError::invalid(format!(
                    "outcome '{}' needs one effect list per treatment",
                    o.name
                )));
            }
            if !(o.noise_sd >= 0.0) {
                return Err(MopolError::invalid("noise_sd must be non-negative"));
            }
            let too_wide = o
                .baseline
                .iter()
                .chain(o.effects.iter().flatten())
                .filter_map(Term::max_feature)
                .any(|f| f >= p);
            if too_wide {
                return Err(MopolError::invalid(format!(
                    "outcome '{}' references a feature outside 0..{p}",
                    o.name
                )));
            }
        }
        Ok(())
    }

    /// True mean of potential outcome `y` under treatment `w` at `x`.
    pub fn outcome_mean(&self, x: &[f64], w: usize, y: usize) -> f64 {
        let o = &self.outcomes[y];
        eval_terms(&o.baseline, x) + eval_terms(&o.effects[w], x)
    }

    /// True assignment probabilities at `x`.
    pub fn propensities(&self, x: &[f64]) -> Vec<f64> {
        match &self.propensity {
            Propensity::Constant { probabilities } => probabilities.clone(),
            Propensity::Softmax { coefficients } => {
                let logits: Vec<f64> = coefficients
                    .iter()
                    .map(|c| c[0] + c[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
                    .collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                let s: f64 = ex.iter().sum();
                ex.into_iter().map(|v| v / s).collect()
            }
        }
    }

    /// Draw one covariate vector.
    pub fn draw_covariates<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let CovariateDist { low, high, resolution } = self.covariates;
        (0..self.n_covariates)
            .map(|_| {
                let u = rng.random_range(low..high);
                match resolution {
                    Some(r) => ((u / r).round() * r).clamp(low, high),
                    None => u,
                }
            })
            .collect()
    }
}

/// Draw a sample from `spec`. Identical `(spec, seed)` gives bit-identical output.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<SynthSample> {
    spec.validate()?;
    let (n, p, d, n_y) = (spec.n, spec.n_covariates, spec.n_treatments, spec.outcomes.len());
    let mut rng = crate::rng::stream(seed, &[0x5157_4e54]);
    let mut x = Array2::zeros((n, p));
    let mut outcome_model = Array3::zeros((n, d, n_y));
    let mut propensities = Array2::zeros((n, d));
    let mut treatments = Vec::with_capacity(n);
    let mut outcomes = Array2::zeros((n, n_y));

    for i in 0..n {
        let xi = spec.draw_covariates(&mut rng);
        let e = spec.propensities(&xi);
        if e.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(MopolError::invalid(format!(
                "degenerate propensity at row {i}: {e:?}"
            )));
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut wi = d - 1;
        for (w, &ew) in e.iter().enumerate() {
            acc += ew;
            if u < acc {
                wi = w;
                break;
            }
        }
        for w in 0..d {
            propensities[[i, w]] = e[w];
            for y in 0..n_y {
                outcome_model[[i, w, y]] = spec.outcome_mean(&xi, w, y);
            }
        }
        for y in 0..n_y {
            let z: f64 = StandardNormal.sample(&mut rng);
            outcomes[[i, y]] = outcome_model[[i, wi, y]] + spec.outcomes[y].noise_sd * z;
        }
        for (j, v) in xi.into_iter().enumerate() {
            x[[i, j]] = v;
        }
        treatments.push(wi);
    }

    let mut data = Dataset::new(x, treatments, outcomes, d).map_err(|e| {
        MopolError::invalid(format!("generated sample is degenerate ({e}); increase n"))
    })?;
    data.outcome_names = spec.outcomes.iter().map(|o| o.name.clone()).collect();
    let nuisance = NuisanceEstimates {
        outcome_model,
        propensities,
    };
    let scores = aipw_scores(&data, &nuisance, 0.0)?;
    Ok(SynthSample {
        data,
        nuisance,
        scores,
    })
}
