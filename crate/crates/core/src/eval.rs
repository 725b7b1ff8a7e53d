//! Ensembles built from solver output and the sweeps that score them.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::burgers::{analytic_u, BurgersConfig, Sample, X_MAX, X_MIN};
use crate::error::{Error, Result};
use crate::par;
use crate::qubo::{build_qubo, EnsembleProblem, FixedPointCode, QuboProblem};
use crate::solvers::{exact_solve_capped, simulated_anneal, SaConfig, Spectrum, DEFAULT_MAX_VARS};
use crate::trainer::WeakLearner;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub weights: Vec<f64>,
    pub learners: Vec<String>,
}

impl EnsembleModel {
    pub fn new(weights: Vec<f64>, learners: Vec<String>) -> Result<Self> {
        if weights.len() != learners.len() {
            return Err(Error::Contract(format!(
                "{} weights for {} learners",
                weights.len(),
                learners.len()
            )));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!("ensemble weights sum to {s}, not 1")));
        }
        Ok(Self { weights, learners })
    }
}

/// `Σ_k w_k h_k(t, x)` at every point.
pub fn predict_ensemble(weights: &[f64], learners: &[WeakLearner], points: &[(f64, f64)]) -> Result<Vec<f64>> {
    if weights.len() != learners.len() {
        return Err(Error::Contract(format!(
            "{} weights for {} learners",
            weights.len(),
            learners.len()
        )));
    }
    par::map(points, |&(t, x)| {
        let mut f = 0.0;
        for (w, l) in weights.iter().zip(learners) {
            f += w * l.predict(t, x)?;
        }
        Ok(f)
    })
    .into_iter()
    .collect()
}

pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::Contract(format!(
            "mse needs equal non-empty inputs, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    let s: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y).powi(2)).sum();
    Ok(s / predictions.len() as f64)
}

/// Row-major `M × K` matrix of learner outputs at the samples.
pub fn prediction_matrix(learners: &[WeakLearner], samples: &[Sample]) -> Result<Vec<f64>> {
    let rows = par::map(samples, |s| {
        learners.iter().map(|l| l.predict(s.t, s.x)).collect::<Result<Vec<_>>>()
    });
    let mut h = Vec::with_capacity(samples.len() * learners.len());
    for r in rows {
        h.extend(r?);
    }
    Ok(h)
}

/// Train-split problem used to build the QUBO, plus the held-out split
/// used only for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleData {
    pub train: EnsembleProblem,
    pub test: EnsembleProblem,
    pub labels: Vec<String>,
}

impl EnsembleData {
    pub fn from_learners(learners: &[WeakLearner], train: &[Sample], test: &[Sample], lambda: f64) -> Result<Self> {
        let k = learners.len();
        let targets = |s: &[Sample]| s.iter().map(|s| s.u).collect::<Vec<_>>();
        Ok(Self {
            train: EnsembleProblem::new(prediction_matrix(learners, train)?, targets(train), k, lambda)?,
            test: EnsembleProblem::new(prediction_matrix(learners, test)?, targets(test), k, 0.0)?,
            labels: learners.iter().map(|l| l.label.clone()).collect(),
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Ok(Self {
            train: self.train.with_lambda(lambda)?,
            ..self.clone()
        })
    }

    pub fn n_learners(&self) -> usize {
        self.train.n_learners
    }

    /// Per-learner `(train, test)` MSE.
    pub fn single_learner_mse(&self) -> Vec<(f64, f64)> {
        (0..self.n_learners())
            .map(|k| {
                let mut w = vec![0.0; self.n_learners()];
                w[k] = 1.0;
                (self.train.mse(&w), self.test.mse(&w))
            })
            .collect()
    }

    pub fn qubo(&self, code: &FixedPointCode) -> Result<QuboProblem> {
        let mut q = build_qubo(&self.train, code)?;
        q.meta.learner_order = self.labels.clone();
        Ok(q)
    }
}

/// Column order that puts the learner with the lowest train MSE last, so
/// that the eliminated reference learner is the strongest one and its
/// one-hot weight vector (all free weights zero) is representable whenever
/// `c = d`. Ties keep the original order.
pub fn reference_last_order(train_h: &[f64], y: &[f64], k: usize) -> Vec<usize> {
    let m = y.len() as f64;
    let mse: Vec<f64> = (0..k)
        .map(|j| {
            y.iter()
                .enumerate()
                .map(|(i, yi)| (train_h[i * k + j] - yi).powi(2))
                .sum::<f64>()
                / m
        })
        .collect();
    let best = (0..k).fold(0, |b, j| if mse[j] < mse[b] { j } else { b });
    let mut order: Vec<usize> = (0..k).filter(|&j| j != best).collect();
    order.push(best);
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Exact {
        #[serde(default = "default_max_vars")]
        max_vars: usize,
    },
    Sa(SaConfig),
}

fn default_max_vars() -> usize {
    DEFAULT_MAX_VARS
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Exact { .. } => "exact",
            Method::Sa(_) => "sa",
        }
    }

    /// Best bitstring and its energy; exact ties resolve to the
    /// lexicographically smallest ground state.
    pub fn minimise(&self, q: &QuboProblem) -> Result<(Vec<u8>, f64)> {
        match self {
            Method::Exact { max_vars } => {
                let s = exact_solve_capped(q, 1, *max_vars)?;
                Ok((s.ground().bitstrings[0].clone(), s.ground().energy))
            }
            Method::Sa(cfg) => {
                let r = simulated_anneal(q, cfg)?;
                let b = r.best();
                Ok((b.bits.clone(), b.energy))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// Level index, `λ` or `R`, depending on the sweep.
    pub id: f64,
    pub energy: Option<f64>,
    /// `J` (MSE plus ridge penalty) on the train split at the QUBO's `λ`.
    pub objective: f64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub seconds: Option<f64>,
    pub weights: Vec<f64>,
}

fn row(data: &EnsembleData, id: f64, energy: Option<f64>, weights: Vec<f64>, seconds: Option<f64>) -> EvalRow {
    let pen: f64 = weights.iter().map(|w| w * w).sum();
    let train_mse = data.train.mse(&weights);
    EvalRow {
        id,
        energy,
        objective: train_mse + data.train.lambda * pen,
        train_mse,
        test_mse: data.test.mse(&weights),
        seconds,
        weights,
    }
}

/// One row per level, scored at the level's lexicographically smallest
/// bitstring.
pub fn evaluate_spectrum(spectrum: &Spectrum, data: &EnsembleData, code: &FixedPointCode) -> Result<Vec<EvalRow>> {
    if spectrum.levels.is_empty() {
        return Err(Error::Contract("empty spectrum".into()));
    }
    spectrum
        .levels
        .iter()
        .enumerate()
        .map(|(i, level)| {
            let bits = &level.bitstrings[0];
            let w = crate::qubo::reconstruct_weights(bits, code, data.n_learners())?;
            Ok(row(data, i as f64, Some(level.energy), w, None))
        })
        .collect()
}

/// Solve at every precision in `bits`, keeping `code`'s `c` and `d`.
pub fn precision_sweep(
    data: &EnsembleData,
    bits: &[usize],
    code: &FixedPointCode,
    method: &Method,
) -> Result<Vec<EvalRow>> {
    bits.iter()
        .map(|&r| {
            let code = code.with_bits(r);
            let start = Instant::now();
            let q = data.qubo(&code)?;
            let (b, e) = method.minimise(&q)?;
            let secs = start.elapsed().as_secs_f64();
            Ok(row(data, r as f64, Some(e), q.weights(&b)?, Some(secs)))
        })
        .collect()
}

/// Re-solve at every `λ`; `train_mse` is the plain MSE without the ridge
/// penalty.
pub fn lambda_sweep(data: &EnsembleData, grid: &[f64], code: &FixedPointCode, method: &Method) -> Result<Vec<EvalRow>> {
    if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Config("lambda grid must be non-empty with values >= 0".into()));
    }
    let rows = par::map(grid, |&lambda| -> Result<EvalRow> {
        let d = data.with_lambda(lambda)?;
        let start = Instant::now();
        let q = d.qubo(code)?;
        let (b, e) = method.minimise(&q)?;
        let secs = start.elapsed().as_secs_f64();
        Ok(row(&d, lambda, Some(e), q.weights(&b)?, Some(secs)))
    });
    rows.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: f64,
    pub x: f64,
    pub u_analytic: f64,
    pub u_ensemble: f64,
    pub method: String,
}

/// Analytic solution against the ensemble on a uniform `x` grid at each
/// time.
pub fn solution_curves(
    weights: &[f64],
    learners: &[WeakLearner],
    burgers: &BurgersConfig,
    times: &[f64],
    n_x: usize,
    method: &str,
) -> Result<Vec<CurveRow>> {
    let n_x = n_x.max(2);
    let points: Vec<(f64, f64)> = times
        .iter()
        .flat_map(|&t| (0..n_x).map(move |i| (t, (X_MIN + (X_MAX - X_MIN) * i as f64 / (n_x - 1) as f64).min(X_MAX))))
        .collect();
    let pred = predict_ensemble(weights, learners, &points)?;
    points
        .iter()
        .zip(pred)
        .map(|(&(t, x), u_ensemble)| {
            Ok(CurveRow {
                t,
                x,
                u_analytic: analytic_u(t, x, burgers)?,
                u_ensemble,
                method: method.to_string(),
            })
        })
        .collect()
}
