use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::burgers::{BurgersConfig, PAPER_TEST_TIMES, PAPER_TRAIN_TIMES};
use crate::error::{Error, Result};
use crate::eval::Method;
use crate::nn::MlpArchitecture;
use crate::qubo::FixedPointCode;
use crate::seed::{derive, STAGE_DATA, STAGE_SOLVE, STAGE_TRAIN};
use crate::solvers::{SaConfig, DEFAULT_MAX_VARS};
use crate::trainer::{LrSchedule, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub n_per_time: usize,
    pub train_times: Vec<f64>,
    pub test_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Exact,
    Sa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: MethodName,
    /// Spectrum depth reported by `evaluate`.
    pub levels: usize,
    pub max_vars: usize,
    pub sa: SaConfig,
    /// Overrides the seed derived from the master seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub precision: Vec<usize>,
    pub precision_methods: Vec<MethodName>,
    pub lambda_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Points per time slice in `fig1_curves.csv`.
    pub curve_points: usize,
    /// Write wall-clock seconds into `table2.csv`. Off by default so reruns
    /// are byte-identical.
    pub timings: bool,
}

/// One experiment. Missing keys fall back to the `desk` preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub burgers: BurgersConfig,
    pub data: DataConfig,
    pub architectures: Vec<MlpArchitecture>,
    pub train: TrainConfig,
    pub code: FixedPointCode,
    pub lambda: f64,
    pub solver: SolverConfig,
    pub sweeps: SweepConfig,
    pub report: ReportConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Small sample counts and a few thousand epochs; minutes on a laptop.
    pub fn desk() -> Self {
        Self {
            seed: 2021,
            burgers: BurgersConfig::default(),
            data: DataConfig {
                n_per_time: 250,
                train_times: PAPER_TRAIN_TIMES.to_vec(),
                test_times: PAPER_TEST_TIMES.to_vec(),
            },
            architectures: MlpArchitecture::reference_roster(),
            train: TrainConfig::default(),
            code: FixedPointCode::default(),
            lambda: 0.0,
            solver: SolverConfig {
                method: MethodName::Exact,
                levels: 11,
                max_vars: DEFAULT_MAX_VARS,
                sa: SaConfig::default(),
                seed: None,
            },
            sweeps: SweepConfig {
                precision: vec![3, 4, 5, 6],
                precision_methods: vec![MethodName::Exact, MethodName::Sa],
                lambda_grid: vec![0.0, 0.01, 0.1, 1.0],
            },
            report: ReportConfig {
                curve_points: 101,
                timings: false,
            },
            output_dir: PathBuf::from("out/desk"),
        }
    }

    /// Full-size datasets (160,000 / 60,000 samples) and the `G <= 550`
    /// stopping rule.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.data.n_per_time = 20_000;
        c.train = TrainConfig {
            max_epochs: 20_000,
            batch_interior: 1000,
            batch_boundary: 500,
            batch_initial: 500,
            lr: LrSchedule {
                alpha0: 5e-5,
                decay_epochs: 5000.0,
            },
            epsilon: Some(550.0),
            seed: 0,
        };
        c.sweeps.precision = (3..=14).collect();
        c.report.timings = true;
        c.output_dir = PathBuf::from("out/paper");
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected desk or paper)"
            ))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.burgers.validate()?;
        if self.architectures.len() < 2 {
            return Err(Error::Config("an ensemble needs at least two architectures".into()));
        }
        for a in &self.architectures {
            a.validate()?;
        }
        self.train.validate()?;
        self.code.validate()?;
        self.solver.sa.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if self.solver.levels == 0 {
            return Err(Error::Config("solver.levels must be >= 1".into()));
        }
        if self.data.n_per_time == 0 {
            return Err(Error::Config("data.n_per_time must be >= 1".into()));
        }
        if self.sweeps.precision.contains(&0) {
            return Err(Error::Config("precision sweep values must be >= 1".into()));
        }
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        derive(self.seed, STAGE_DATA)
    }

    pub fn learner_seed(&self, k: usize) -> u64 {
        derive(derive(self.seed, STAGE_TRAIN), k as u64)
    }

    pub fn solver_seed(&self) -> u64 {
        self.solver.seed.unwrap_or_else(|| derive(self.seed, STAGE_SOLVE))
    }

    pub fn method(&self, name: MethodName) -> Method {
        match name {
            MethodName::Exact => Method::Exact {
                max_vars: self.solver.max_vars,
            },
            MethodName::Sa => Method::Sa(SaConfig {
                seed: self.solver_seed(),
                ..self.solver.sa
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_roundtrip() {
        for p in ["desk", "paper"] {
            let c = ExperimentConfig::preset(p).unwrap();
            c.validate().unwrap();
            let s = serde_json::to_string(&c).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
            assert_eq!(back, c);
        }
        assert!(ExperimentConfig::preset("huge").is_err());
    }

    #[test]
    fn solver_seed_is_independent_of_training_seeds() {
        let mut c = ExperimentConfig::desk();
        let before: Vec<u64> = (0..4).map(|k| c.learner_seed(k)).collect();
        c.solver.seed = Some(12345);
        assert_eq!(c.solver_seed(), 12345);
        assert_eq!(before, (0..4).map(|k| c.learner_seed(k)).collect::<Vec<_>>());
    }

    #[test]
    fn single_architecture_rejected() {
        let mut c = ExperimentConfig::desk();
        c.architectures.truncate(1);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
