//! Experiment configuration: a versioned JSON schema describing the data
//! source, the training protocol, and a roster of model jobs trained
//! against that data.
//!
//! One file captures one experiment. Jobs within it differ by model
//! family, solver, and symmetry weight; `train` runs them one at a time
//! (or all), so sweeps over the symmetry weight are separate jobs rather
//! than hidden loops.

use serde::{Deserialize, Serialize};

use crate::dynamics::{CoupledOscillatorParams, DatasetSpec};
use crate::error::{Error, Result};
use crate::integrators::SolveMethod;
use crate::losses::{LambdaSchedule, ReversingKind, ReversingOperator};
use crate::metrics::EnergyFunction;
use crate::models::Model;
use rand::Rng;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Free-form experiment id, e.g. "I" or "custom-damped".
    pub experiment: String,
    pub data: DataConfig,
    /// Training trajectories longer than this many transitions are split
    /// into consecutive windows before optimization.
    pub segment_max_len: usize,
    pub training: TrainingConfig,
    pub jobs: Vec<JobConfig>,
    /// Default directory for checkpoints and reports; the CLI flag wins.
    #[serde(default)]
    pub output_dir: Option<String>,
}

/// Where trajectories come from: generated on the fly from system specs,
/// or ingested from a measured CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    Synthetic {
        train: DatasetSpec,
        test: DatasetSpec,
    },
    RealCsv {
        path: String,
        /// Chronological fraction of rows used for training.
        split_fraction: f64,
        /// Optional generator for a synthetic stand-in file, so the
        /// pipeline runs without the measured data.
        #[serde(default)]
        stand_in: Option<StandInSpec>,
    },
}

/// Synthetic substitute for the measured coupled-oscillator trajectory:
/// two linearly coupled damped oscillators rolled out from a fixed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandInSpec {
    pub params: CoupledOscillatorParams,
    /// Initial state [q1, q2, p1, p2].
    pub initial: Vec<f64>,
    /// Rows in the emitted file (states, not transitions).
    pub rows: usize,
    pub dt: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl StandInSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.initial.len() != 4 {
            return Err(Error::InvalidConfig(format!(
                "stand-in initial state needs 4 components, got {}",
                self.initial.len()
            )));
        }
        if self.initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("stand-in initial state must be finite".into()));
        }
        if self.rows < 3 {
            return Err(Error::InvalidConfig(format!(
                "stand-in needs at least 3 rows to split, got {}",
                self.rows
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("stand-in dt must be positive, got {}", self.dt)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "stand-in noise sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch: BatchMode,
    /// Seeds parameter initialization and minibatch shuffling.
    pub seed: u64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let BatchMode::Minibatch { size: 0 } = self.batch {
            return Err(Error::InvalidConfig("minibatch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BatchMode {
    /// Every segment contributes to every optimizer step.
    Full,
    /// Segments are shuffled each epoch and consumed in chunks.
    Minibatch { size: usize },
}

/// One model trained against the experiment's data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    /// Unique name; becomes the checkpoint and report file stem.
    pub name: String,
    pub model: ModelConfig,
    pub solver: SolveMethod,
    /// Reversing operator for the symmetry loss and symmetry checks.
    /// Required whenever `lambda` is set.
    #[serde(default)]
    pub reversing: Option<ReversingOperator>,
    /// Weight of the symmetry loss; omitted means plain ODE training.
    #[serde(default)]
    pub lambda: Option<LambdaSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Oden {
        hidden: Vec<usize>,
        #[serde(default)]
        time_augmented: bool,
    },
    /// Separable Hamiltonian model; both scalar nets share the hidden
    /// layout.
    Hoden {
        hidden: Vec<usize>,
        #[serde(default)]
        time_augmented: bool,
    },
}

impl ModelConfig {
    pub fn time_augmented(&self) -> bool {
        match self {
            ModelConfig::Oden { time_augmented, .. } => *time_augmented,
            ModelConfig::Hoden { time_augmented, .. } => *time_augmented,
        }
    }

    pub fn hidden(&self) -> &[usize] {
        match self {
            ModelConfig::Oden { hidden, .. } => hidden,
            ModelConfig::Hoden { hidden, .. } => hidden,
        }
    }

    pub fn build(&self, state_dim: usize, rng: &mut impl Rng) -> Result<Model> {
        match self {
            ModelConfig::Oden { hidden, time_augmented } => {
                Model::new_oden(state_dim, hidden.clone(), *time_augmented, rng)
            }
            ModelConfig::Hoden { hidden, time_augmented } => {
                Model::new_hoden(state_dim, hidden.clone(), *time_augmented, rng)
            }
        }
    }
}

fn valid_job_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '_' | '-' | '.'))
}

impl JobConfig {
    pub fn validate(&self, state_dim: usize) -> Result<()> {
        if !valid_job_name(&self.name) {
            return Err(Error::InvalidConfig(format!(
                "job name {:?} must be lowercase alphanumerics plus '_', '-', '.'",
                self.name
            )));
        }
        if self.model.hidden().is_empty() || self.model.hidden().iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig(format!(
                "job {}: hidden layers must be nonempty with positive widths",
                self.name
            )));
        }
        if matches!(self.model, ModelConfig::Hoden { .. }) && state_dim % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "job {}: a separable Hamiltonian model needs an even state dimension, got {}",
                self.name, state_dim
            )));
        }
        if self.solver == SolveMethod::Leapfrog {
            let separable =
                matches!(self.model, ModelConfig::Hoden { .. }) && !self.model.time_augmented();
            if !separable {
                return Err(Error::InvalidConfig(format!(
                    "job {}: leapfrog needs the separable Hamiltonian split, so it only \
                     applies to non-time-augmented hoden models",
                    self.name
                )));
            }
        }
        if let Some(rev) = &self.reversing {
            rev.validate()?;
            if let ReversingKind::Custom { signs } = &rev.kind {
                if signs.len() != state_dim {
                    return Err(Error::InvalidConfig(format!(
                        "job {}: sign mask has {} entries for a {}-dimensional state",
                        self.name,
                        signs.len(),
                        state_dim
                    )));
                }
            }
        }
        if let Some(lambda) = &self.lambda {
            lambda.validate()?;
            if self.reversing.is_none() {
                return Err(Error::InvalidConfig(format!(
                    "job {}: a symmetry weight needs a reversing operator",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Whether training optimizes the symmetry loss at all.
    pub fn uses_symmetry_loss(&self) -> bool {
        self.lambda.as_ref().map_or(false, |l| !l.is_zero())
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            DataConfig::Synthetic { train, test } => {
                train.validate()?;
                test.validate()?;
                if train.system != test.system {
                    return Err(Error::InvalidConfig(
                        "train and test sets must share the system".into(),
                    ));
                }
                Ok(())
            }
            DataConfig::RealCsv {
                path,
                split_fraction,
                stand_in,
            } => {
                if path.is_empty() {
                    return Err(Error::InvalidConfig("data path is empty".into()));
                }
                if !(split_fraction.is_finite() && *split_fraction > 0.0 && *split_fraction < 1.0)
                {
                    return Err(Error::InvalidConfig(format!(
                        "split fraction must lie strictly between 0 and 1, got {split_fraction}"
                    )));
                }
                if let Some(spec) = stand_in {
                    spec.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Dimension of the states the models will see. Measured data follows
    /// the fixed four-column coupled-oscillator schema.
    pub fn state_dim(&self) -> usize {
        match self {
            DataConfig::Synthetic { train, .. } => train.system.dim(),
            DataConfig::RealCsv { .. } => 4,
        }
    }

    /// Closed-form energy for reporting, when the system has one.
    pub fn energy_function(&self) -> Option<EnergyFunction> {
        match self {
            DataConfig::Synthetic { train, .. } => EnergyFunction::for_system(&train.system),
            DataConfig::RealCsv { .. } => None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidConfig(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.experiment.is_empty() {
            return Err(Error::InvalidConfig("experiment id is empty".into()));
        }
        self.data.validate()?;
        if self.segment_max_len == 0 {
            return Err(Error::InvalidConfig("segment_max_len must be at least 1".into()));
        }
        self.training.validate()?;
        if self.jobs.is_empty() {
            return Err(Error::InvalidConfig("config declares no jobs".into()));
        }
        let state_dim = self.data.state_dim();
        for job in &self.jobs {
            job.validate(state_dim)?;
        }
        for (i, a) in self.jobs.iter().enumerate() {
            if self.jobs[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidConfig(format!("duplicate job name {:?}", a.name)));
            }
        }
        Ok(())
    }

    pub fn job(&self, name: &str) -> Result<&JobConfig> {
        self.jobs.iter().find(|j| j.name == name).ok_or_else(|| {
            let known: Vec<&str> = self.jobs.iter().map(|j| j.name.as_str()).collect();
            Error::InvalidConfig(format!("no job named {name:?}; config has {known:?}"))
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
