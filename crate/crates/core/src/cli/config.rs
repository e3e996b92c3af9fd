use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consolidation::SiConfig;
use crate::data::Scenario;
use crate::error::{Error, Result};
use crate::model::{Mechanisms, ModelConfig};
use crate::numerics::Real;
use crate::plasticity::OptimizerConfig;
use crate::trainer::{DropoutConfig, ReplayConfig, RunConfig, TrainingConfig};

/// A complete experiment: the stream to build, the seeds to run and every
/// hyperparameter of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub scenario: Scenario,
    pub n_tasks: usize,
    /// Rotation increment between consecutive Rot tasks, in degrees.
    pub theta_inc: Real,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub data_dir: Option<PathBuf>,
    pub run_id: Option<String>,
    /// Write a checkpoint after every task.
    pub checkpoints: bool,
    pub model: ModelConfig,
    pub mechanisms: Mechanisms,
    pub optimizer: OptimizerConfig,
    pub training: TrainingConfig,
    pub dropout: DropoutConfig,
    pub si: SiConfig,
    pub replay: ReplayConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            dataset: "mnist".into(),
            scenario: Scenario::Perm,
            n_tasks: 5,
            theta_inc: 8.0,
            seeds: vec![0],
            out_dir: PathBuf::from("results"),
            data_dir: None,
            run_id: None,
            checkpoints: false,
            model: run.model,
            mechanisms: run.mechanisms,
            optimizer: run.optimizer,
            training: run.training,
            dropout: run.dropout,
            si: run.si,
            replay: run.replay,
        }
    }
}

impl ExperimentConfig {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            model: self.model.clone(),
            mechanisms: self.mechanisms,
            optimizer: self.optimizer.clone(),
            training: self.training.clone(),
            dropout: self.dropout.clone(),
            si: self.si.clone(),
            replay: self.replay.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tasks == 0 {
            return Err(Error::Config("n_tasks must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.dataset.is_empty() {
            return Err(Error::Config("dataset must be named".into()));
        }
        match self.scenario {
            Scenario::Seq if self.n_tasks > 5 => {
                return Err(Error::Config(format!("seq supports at most 5 tasks, got {}", self.n_tasks)))
            }
            Scenario::Rot if (self.n_tasks - 1) as Real * self.theta_inc > 180.0 || self.theta_inc < 0.0 => {
                return Err(Error::Config(format!(
                    "rotations must stay within [0, 180] degrees ({} tasks at {})",
                    self.n_tasks, self.theta_inc
                )))
            }
            _ => {}
        }
        self.run_config().validate()
    }

    pub fn run_id(&self) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| format!("{}-{}{}", self.dataset, self.scenario, self.n_tasks))
    }

    /// Parses TOML text; unknown keys are errors.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies the keys present in `text` on top of `self`.
    pub fn merge_toml(&self, text: &str) -> Result<Self> {
        let mut base: toml::Table = toml::from_str(&self.to_toml()?).map_err(|e| Error::Config(e.to_string()))?;
        let over: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, over);
        let text = toml::to_string(&base).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn load(path: &Path, base: &Self) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        base.merge_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
