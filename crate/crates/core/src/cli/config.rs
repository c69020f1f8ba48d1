//! Run configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{NoiseSchedule, SamplerConfig, ScheduleKind};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::signals::PreprocessConfig;
use crate::synthdata::SynthConfig;
use crate::training::{Ablations, CurriculumConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Quadratic,
            steps: 50,
            beta_start: 1e-4,
            beta_end: 0.5,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.steps, self.kind, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
}

/// Every knob of a run. Missing sections take their defaults; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub curriculum: CurriculumConfig,
    pub sampler: SamplerConfig,
    pub data: DataConfig,
    pub ablations: Ablations,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::from_json(&std::fs::read_to_string(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.curriculum().validate()?;
        self.data.synth.validate()?;
        let sched = self.schedule.build()?;
        if sched.steps() != self.model.diffusion_steps {
            return Err(Error::Config(format!(
                "schedule.steps = {} but model.diffusion_steps = {}",
                sched.steps(),
                self.model.diffusion_steps
            )));
        }
        self.sampler.timesteps(sched.steps())?;
        Ok(())
    }

    /// The curriculum with the `ablations` section applied.
    pub fn curriculum(&self) -> CurriculumConfig {
        CurriculumConfig {
            ablations: self.ablations,
            ..self.curriculum.clone()
        }
    }

    /// SHA-256 over the canonical JSON form; formatting of the source file
    /// does not matter.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Flag, then environment (both handled by the argument parser), then the
/// config value.
pub fn resolve_seed(flag_or_env: Option<u64>, config_value: u64) -> u64 {
    flag_or_env.unwrap_or(config_value)
}
