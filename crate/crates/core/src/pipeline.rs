//! Stage runner behind the CLI. Every stage reads its inputs from and
//! writes its outputs to `output_dir`:
//!
//! | stage             | writes                                              |
//! |-------------------|-----------------------------------------------------|
//! | `gen-data`        | `dataset.csv`                                       |
//! | `train`           | `models/learner_<k>.json`, `training_report.csv`    |
//! | `build-qubo`      | `qubo.json`                                         |
//! | `solve`           | `solutions.json`                                    |
//! | `evaluate`        | `fig1_curves.csv`, `fig2_levels.csv`                |
//! | `sweep-precision` | `table2.csv`                                        |
//! | `sweep-lambda`    | `fig3_lambda.csv`                                   |
//!
//! `pipeline` runs them in that order and skips the first four when their
//! outputs already exist.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::burgers::{sample_dataset, SampleSet};
use crate::config::{ExperimentConfig, MethodName};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_spectrum, lambda_sweep, precision_sweep, reference_last_order, solution_curves, EnsembleData, Method,
};
use crate::nn::MlpParams;
use crate::qubo::QuboProblem;
use crate::solvers::{exact_solve_capped, simulated_anneal, SolveSample, Spectrum};
use crate::trainer::{train_weak_learner, TrainConfig, TrainingReport, WeakLearner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    GenData,
    Train,
    BuildQubo,
    Solve,
    Evaluate,
    SweepPrecision,
    SweepLambda,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::GenData,
        Stage::Train,
        Stage::BuildQubo,
        Stage::Solve,
        Stage::Evaluate,
        Stage::SweepPrecision,
        Stage::SweepLambda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::Train => "train",
            Stage::BuildQubo => "build-qubo",
            Stage::Solve => "solve",
            Stage::Evaluate => "evaluate",
            Stage::SweepPrecision => "sweep-precision",
            Stage::SweepLambda => "sweep-lambda",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage '{s}'")))
    }
}

/// A failed stage, named.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
}

pub const DATASET: &str = "dataset.csv";
pub const MODELS: &str = "models";
pub const TRAINING_REPORT: &str = "training_report.csv";
pub const QUBO: &str = "qubo.json";
pub const SOLUTIONS: &str = "solutions.json";
pub const FIG1: &str = "fig1_curves.csv";
pub const FIG2: &str = "fig2_levels.csv";
pub const TABLE2: &str = "table2.csv";
pub const FIG3: &str = "fig3_lambda.csv";

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

#[derive(Serialize)]
struct ReportRow<'a> {
    learner: &'a str,
    epoch: usize,
    #[serde(rename = "G")]
    g: f64,
}

#[derive(Serialize)]
struct LevelRow {
    #[serde(rename = "R")]
    r: usize,
    level: usize,
    energy: f64,
    train_mse: f64,
    test_mse: f64,
}

#[derive(Serialize)]
struct Table2Row {
    #[serde(rename = "R")]
    r: usize,
    method: &'static str,
    train_mse: f64,
    test_mse: f64,
    seconds: Option<f64>,
}

#[derive(Serialize)]
struct LambdaRow {
    lambda: f64,
    mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionEntry {
    pub bits: Vec<u8>,
    pub energy: f64,
    pub read: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    pub weights: Vec<f64>,
}

/// Contents of `solutions.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solutions {
    pub method: String,
    pub learner_order: Vec<String>,
    pub best: SolutionEntry,
    pub samples: Vec<SolutionEntry>,
}

/// Summary printed by `evaluate`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub ensemble_train_mse: f64,
    pub ensemble_test_mse: f64,
    /// `(label, train, test)` per learner.
    pub learners: Vec<(String, f64, f64)>,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn model_path(&self, k: usize) -> PathBuf {
        self.out(MODELS).join(format!("learner_{k}.json"))
    }

    fn learner_id(k: usize) -> String {
        format!("learner_{k}")
    }

    pub fn run_stage(&self, stage: Stage) -> std::result::Result<(), StageError> {
        let res = match stage {
            Stage::GenData => self.gen_data().map(drop),
            Stage::Train => self.train().map(drop),
            Stage::BuildQubo => self.build_qubo().map(drop),
            Stage::Solve => self.solve().map(drop),
            Stage::Evaluate => self.evaluate().map(drop),
            Stage::SweepPrecision => self.sweep_precision(),
            Stage::SweepLambda => self.sweep_lambda(),
        };
        res.map_err(|source| StageError { stage, source })
    }

    fn is_done(&self, stage: Stage) -> bool {
        match stage {
            Stage::GenData => self.out(DATASET).exists(),
            Stage::Train => {
                self.out(TRAINING_REPORT).exists()
                    && (0..self.cfg.architectures.len()).all(|k| self.model_path(k).exists())
            }
            Stage::BuildQubo => self.out(QUBO).exists(),
            Stage::Solve => self.out(SOLUTIONS).exists(),
            _ => false,
        }
    }

    /// Runs every stage up to and including `until`, resuming from
    /// artifacts already on disk.
    pub fn run(&self, until: Stage) -> std::result::Result<Vec<Stage>, StageError> {
        let mut ran = Vec::new();
        fs::create_dir_all(&self.cfg.output_dir).map_err(|e| StageError {
            stage: Stage::GenData,
            source: Error::io(&self.cfg.output_dir, e),
        })?;
        let cfg_json = serde_json::to_vec_pretty(&self.cfg).expect("config serializes");
        write_file(&self.out("config.json"), &cfg_json).map_err(|source| StageError {
            stage: Stage::GenData,
            source,
        })?;
        for stage in Stage::ALL.into_iter().filter(|s| *s <= until) {
            if self.is_done(stage) {
                continue;
            }
            self.run_stage(stage)?;
            ran.push(stage);
        }
        Ok(ran)
    }

    pub fn gen_data(&self) -> Result<SampleSet> {
        let d = &self.cfg.data;
        let set = sample_dataset(
            &self.cfg.burgers,
            d.n_per_time,
            &d.train_times,
            &d.test_times,
            self.cfg.data_seed(),
        )?;
        let mut buf = Vec::new();
        set.write_csv(&mut buf)?;
        write_file(&self.out(DATASET), &buf)?;
        Ok(set)
    }

    pub fn load_dataset(&self) -> Result<SampleSet> {
        let text = read_file(&self.out(DATASET))?;
        SampleSet::read_csv(text.as_bytes(), self.cfg.data_seed())
    }

    /// Trains every architecture concurrently, each with its own seed.
    pub fn train(&self) -> Result<Vec<(WeakLearner, TrainingReport)>> {
        let archs: Vec<(usize, &crate::nn::MlpArchitecture)> = self.cfg.architectures.iter().enumerate().collect();
        let results = crate::par::map(&archs, |&(k, arch)| {
            let cfg = TrainConfig {
                seed: self.cfg.learner_seed(k),
                ..self.cfg.train.clone()
            };
            train_weak_learner(arch, &cfg, &self.cfg.burgers).map(|(mut l, r)| {
                l.label = Self::learner_id(k);
                (l, r)
            })
        });
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        for (k, (learner, report)) in results.iter().enumerate() {
            write_file(&self.model_path(k), learner.params.to_json()?.as_bytes())?;
            rows.extend(report.losses.iter().enumerate().map(|(epoch, &g)| ReportRow {
                learner: &learner.label,
                epoch,
                g,
            }));
        }
        write_file(&self.out(TRAINING_REPORT), &csv_bytes(&rows)?)?;
        Ok(results)
    }

    pub fn load_learners(&self) -> Result<Vec<WeakLearner>> {
        (0..self.cfg.architectures.len())
            .map(|k| {
                let params = MlpParams::from_json(&read_file(&self.model_path(k))?)?;
                Ok(WeakLearner {
                    label: Self::learner_id(k),
                    params,
                })
            })
            .collect()
    }

    /// Learners in QUBO column order (strongest on the train split last)
    /// and the matching ensemble data at the configured `λ`.
    pub fn ensemble_data(&self) -> Result<(Vec<WeakLearner>, EnsembleData, SampleSet)> {
        let set = self.load_dataset()?;
        let learners = self.load_learners()?;
        let raw = EnsembleData::from_learners(&learners, &set.train, &set.test, self.cfg.lambda)?;
        let order = reference_last_order(&raw.train.h, &raw.train.y, learners.len());
        let learners: Vec<WeakLearner> = order.iter().map(|&k| learners[k].clone()).collect();
        let data = EnsembleData::from_learners(&learners, &set.train, &set.test, self.cfg.lambda)?;
        Ok((learners, data, set))
    }

    pub fn build_qubo(&self) -> Result<QuboProblem> {
        let (_, data, _) = self.ensemble_data()?;
        let q = data.qubo(&self.cfg.code)?;
        write_file(&self.out(QUBO), q.to_json()?.as_bytes())?;
        Ok(q)
    }

    pub fn load_qubo(&self) -> Result<QuboProblem> {
        QuboProblem::from_json(&read_file(&self.out(QUBO))?)
    }

    pub fn solve(&self) -> Result<Solutions> {
        let q = self.load_qubo()?;
        let method = self.cfg.method(self.cfg.solver.method);
        // Exact: every bitstring of the lowest `solver.levels` levels, tagged
        // with its level. SA: one sample per read.
        let tagged: Vec<(SolveSample, Option<usize>)> = match &method {
            Method::Exact { max_vars } => {
                let spec = exact_solve_capped(&q, self.cfg.solver.levels, *max_vars)?;
                let mut out = Vec::new();
                for (li, level) in spec.levels.iter().enumerate() {
                    for bits in &level.bitstrings {
                        let read = out.len();
                        out.push((
                            SolveSample {
                                bits: bits.clone(),
                                energy: level.energy,
                                read,
                            },
                            Some(li),
                        ));
                    }
                }
                out
            }
            Method::Sa(cfg) => simulated_anneal(&q, cfg)?
                .samples
                .into_iter()
                .map(|s| (s, None))
                .collect(),
        };
        let entry = |(s, level): &(SolveSample, Option<usize>)| -> Result<SolutionEntry> {
            Ok(SolutionEntry {
                bits: s.bits.clone(),
                energy: s.energy,
                read: s.read,
                level: *level,
                weights: q.weights(&s.bits)?,
            })
        };
        let best = tagged
            .iter()
            .reduce(|a, b| if b.0.energy < a.0.energy { b } else { a })
            .expect("solvers return at least one sample");
        let sol = Solutions {
            method: method.name().to_string(),
            learner_order: q.meta.learner_order.clone(),
            best: entry(best)?,
            samples: tagged.iter().map(entry).collect::<Result<Vec<_>>>()?,
        };
        write_file(&self.out(SOLUTIONS), serde_json::to_string_pretty(&sol)?.as_bytes())?;
        Ok(sol)
    }

    pub fn load_solutions(&self) -> Result<Solutions> {
        Ok(serde_json::from_str(&read_file(&self.out(SOLUTIONS))?)?)
    }

    /// Writes the solution curves and the low-spectrum table, and returns
    /// ensemble vs single-learner losses.
    pub fn evaluate(&self) -> Result<Evaluation> {
        let sol = self.load_solutions()?;
        let (learners, data, set) = self.ensemble_data()?;
        let labels: Vec<String> = learners.iter().map(|l| l.label.clone()).collect();
        if labels != sol.learner_order {
            return Err(Error::Contract(format!(
                "solutions were computed for learner order {:?}, current order is {:?}",
                sol.learner_order, labels
            )));
        }
        let w = &sol.best.weights;
        let curves = solution_curves(
            w,
            &learners,
            &self.cfg.burgers,
            &set.test_times,
            self.cfg.report.curve_points,
            &sol.method,
        )?;
        write_file(&self.out(FIG1), &csv_bytes(&curves)?)?;

        let q = data.qubo(&self.cfg.code)?;
        let mut levels = Vec::new();
        if q.n_vars <= self.cfg.solver.max_vars {
            let spec: Spectrum = exact_solve_capped(&q, self.cfg.solver.levels, self.cfg.solver.max_vars)?;
            for (i, r) in evaluate_spectrum(&spec, &data, &self.cfg.code)?.into_iter().enumerate() {
                levels.push(LevelRow {
                    r: self.cfg.code.bits,
                    level: i,
                    energy: r.energy.unwrap_or(f64::NAN),
                    train_mse: r.train_mse,
                    test_mse: r.test_mse,
                });
            }
        }
        write_file(&self.out(FIG2), &csv_bytes(&levels)?)?;

        Ok(Evaluation {
            ensemble_train_mse: data.train.mse(w),
            ensemble_test_mse: data.test.mse(w),
            learners: labels
                .into_iter()
                .zip(data.single_learner_mse())
                .map(|(l, (a, b))| (l, a, b))
                .collect(),
        })
    }

    pub fn sweep_precision(&self) -> Result<()> {
        let (_, data, _) = self.ensemble_data()?;
        let mut rows = Vec::new();
        for &name in &self.cfg.sweeps.precision_methods {
            let method = self.cfg.method(name);
            let bits: Vec<usize> = self
                .cfg
                .sweeps
                .precision
                .iter()
                .copied()
                .filter(|&r| name != MethodName::Exact || (data.n_learners() - 1) * r <= self.cfg.solver.max_vars)
                .collect();
            for r in precision_sweep(&data, &bits, &self.cfg.code, &method)? {
                rows.push(Table2Row {
                    r: r.id as usize,
                    method: method.name(),
                    train_mse: r.train_mse,
                    test_mse: r.test_mse,
                    seconds: if self.cfg.report.timings { r.seconds } else { None },
                });
            }
        }
        write_file(&self.out(TABLE2), &csv_bytes(&rows)?)
    }

    /// `mse` is the train-split mean squared error of the winning weights,
    /// without the ridge penalty.
    pub fn sweep_lambda(&self) -> Result<()> {
        let (_, data, _) = self.ensemble_data()?;
        let method = self.cfg.method(self.cfg.solver.method);
        let rows: Vec<LambdaRow> = lambda_sweep(&data, &self.cfg.sweeps.lambda_grid, &self.cfg.code, &method)?
            .into_iter()
            .map(|r| LambdaRow {
                lambda: r.id,
                mse: r.train_mse,
            })
            .collect();
        write_file(&self.out(FIG3), &csv_bytes(&rows)?)
    }
}
