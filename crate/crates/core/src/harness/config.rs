use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_io::PAPER_PRESET;
use crate::sampler::GuidanceMode;
use crate::schedule::{Schedule, DEFAULT_C0, DEFAULT_C1};

pub const DESK_STEPS: usize = 500;
pub const DESK_TRIALS: usize = 2000;
pub const PAPER_STEPS: usize = 4000;
pub const PAPER_TRIALS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleConfig {
    LearningRate {
        steps: usize,
        #[serde(default = "default_c0")]
        c0: f64,
        #[serde(default = "default_c1")]
        c1: f64,
    },
    Linear {
        steps: usize,
        beta_min: f64,
        beta_max: f64,
    },
}

fn default_c0() -> f64 {
    DEFAULT_C0
}

fn default_c1() -> f64 {
    DEFAULT_C1
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig::LearningRate {
            steps: DESK_STEPS,
            c0: DEFAULT_C0,
            c1: DEFAULT_C1,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<Schedule<f64>> {
        match *self {
            ScheduleConfig::LearningRate { steps, c0, c1 } => Schedule::learning_rate(steps, c0, c1),
            ScheduleConfig::Linear {
                steps,
                beta_min,
                beta_max,
            } => Schedule::linear_beta(steps, beta_min, beta_max),
        }
    }

    pub fn steps(&self) -> usize {
        match *self {
            ScheduleConfig::LearningRate { steps, .. } | ScheduleConfig::Linear { steps, .. } => steps,
        }
    }

    pub fn with_steps(&self, n: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            ScheduleConfig::LearningRate { steps, .. } | ScheduleConfig::Linear { steps, .. } => *steps = n,
        }
        out
    }
}

/// A guided-versus-baseline sampling experiment over a grid of scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Preset name or path to a model file.
    pub model: String,
    pub schedule: ScheduleConfig,
    pub mode: GuidanceMode,
    pub w_grid: Vec<f64>,
    pub class: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Give the baseline chain its own noise instead of sharing the guided chain's.
    pub uncoupled: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: PAPER_PRESET.into(),
            schedule: ScheduleConfig::default(),
            mode: GuidanceMode::ClassifierFree,
            w_grid: vec![0.01, 0.1, 0.5, 1.0, 2.0, 4.0, 10.0],
            class: 1,
            trials: DESK_TRIALS,
            master_seed: 0,
            output_dir: None,
            uncoupled: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::ParseFile {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, path)
    }

    /// Full-size settings: 4000 steps and 10^4 trials per scale.
    pub fn paper_scale(mut self) -> Self {
        self.schedule = self.schedule.with_steps(PAPER_STEPS);
        self.trials = PAPER_TRIALS;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_grid.is_empty() {
            return Err(Error::Config("w_grid must not be empty".into()));
        }
        if self.w_grid.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("w_grid values must be finite and >= 0: {:?}", self.w_grid)));
        }
        if self.w_grid.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Config(format!(
                "w_grid must be strictly ascending: {:?}",
                self.w_grid
            )));
        }
        if self.trials < 2 {
            return Err(Error::Config(format!("trials must be at least 2, got {}", self.trials)));
        }
        if matches!(self.mode, GuidanceMode::None | GuidanceMode::Conditional) && self.w_grid != [0.0] {
            return Err(Error::Config(format!(
                "mode {} supports only w_grid = [0]",
                self.mode.name()
            )));
        }
        Ok(())
    }
}
