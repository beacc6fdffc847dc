//! Experiment configuration, read from a TOML file with flag overrides.
//!
//! Every key is optional; omitted keys take the defaults below.
//!
//! ```toml
//! seed = 0
//! enumeration_cap = 10000000
//!
//! [instance]          # pipeline, dynamics, ablate
//! vocab = 2
//! horizon = 2
//! student_order = 1
//! teacher_order = 1
//! prompt_weights = [1.0]
//! teacher_scale = 1.0
//!
//! [verify]
//! instances = 200
//! vocab = [2, 3]
//! horizon = [1, 2, 3]
//! max_prompts = 2
//! scale = 1.0
//! regime_delta = 0.05
//!
//! [sft]
//! mode = "closed_form"   # or "gradient"
//! alpha = 1.0
//! lr = 0.1
//! steps = 200
//! per_prompt = 2000
//!
//! [data]
//! per_prompt = 10000
//!
//! [train]
//! lr = 0.5
//! steps = 500
//! batch = 64
//! tau = 10.0             # inf disables clipping
//! monitor_every = 1
//! record_wall_clock = false
//!
//! [ablate]
//! seeds = 5
//! steps = 10
//! teacher_bias = 1.5
//! teacher_noise = 0.5
//! identical_teachers = false
//! margin = 0.001
//! sft_per_prompt = 500
//! opd_per_prompt = 2000
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{SuiteConfig, Thm5Regime};
use crate::error::{Error, Result};
use crate::instances::InstanceSpec;
use crate::oracle::DEFAULT_ENUMERATION_CAP;
use crate::pipeline::{SftConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub enumeration_cap: u64,
    pub instance: InstanceSection,
    pub verify: VerifySection,
    pub sft: SftSection,
    pub data: DataSection,
    pub train: TrainSection,
    pub ablate: AblateSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            instance: InstanceSection::default(),
            verify: VerifySection::default(),
            sft: SftSection::default(),
            data: DataSection::default(),
            train: TrainSection::default(),
            ablate: AblateSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSection {
    pub vocab: usize,
    pub horizon: usize,
    pub student_order: usize,
    pub teacher_order: usize,
    pub prompt_weights: Vec<f64>,
    pub teacher_scale: f64,
}

impl Default for InstanceSection {
    fn default() -> Self {
        Self {
            vocab: 2,
            horizon: 2,
            student_order: 1,
            teacher_order: 1,
            prompt_weights: vec![1.0],
            teacher_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub instances: usize,
    pub vocab: Vec<usize>,
    pub horizon: Vec<usize>,
    pub max_prompts: usize,
    pub scale: f64,
    pub regime_delta: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        let spec = InstanceSpec::default();
        Self {
            instances: 200,
            vocab: spec.vocab,
            horizon: spec.horizon,
            max_prompts: spec.max_prompts,
            scale: spec.scale,
            regime_delta: Thm5Regime::default().delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SftMode {
    ClosedForm,
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftSection {
    pub mode: SftMode,
    pub alpha: f64,
    pub lr: f64,
    pub steps: usize,
    pub per_prompt: usize,
}

impl Default for SftSection {
    fn default() -> Self {
        Self {
            mode: SftMode::ClosedForm,
            alpha: 1.0,
            lr: 0.1,
            steps: 200,
            per_prompt: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub per_prompt: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { per_prompt: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub tau: f64,
    pub monitor_every: usize,
    pub record_wall_clock: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            lr: d.lr,
            steps: d.steps,
            batch: d.batch,
            tau: d.tau.unwrap_or(f64::INFINITY),
            monitor_every: d.monitor_every,
            record_wall_clock: d.record_wall_clock,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub seeds: u64,
    pub steps: usize,
    pub teacher_bias: f64,
    pub teacher_noise: f64,
    pub identical_teachers: bool,
    pub margin: f64,
    pub sft_per_prompt: usize,
    pub opd_per_prompt: usize,
}

impl Default for AblateSection {
    fn default() -> Self {
        Self {
            seeds: 5,
            steps: 10,
            teacher_bias: 1.5,
            teacher_noise: 0.5,
            identical_teachers: false,
            margin: 1e-3,
            sft_per_prompt: 500,
            opd_per_prompt: 2000,
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub cap: Option<u64>,
    pub tau: Option<f64>,
    pub lr: Option<f64>,
    pub steps: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// The built-in defaults rendered as a TOML file.
    pub fn default_toml() -> String {
        toml::to_string(&Self::default()).expect("defaults always serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(c) = o.cap {
            self.enumeration_cap = c;
        }
        if let Some(t) = o.tau {
            self.train.tau = t;
        }
        if let Some(lr) = o.lr {
            self.train.lr = lr;
        }
        if let Some(s) = o.steps {
            self.train.steps = s;
            self.ablate.steps = s;
        }
    }

    /// `tau = inf` (or any non-finite value) disables clipping.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.train.lr,
            steps: self.train.steps,
            batch: self.train.batch,
            tau: self.train.tau.is_finite().then_some(self.train.tau),
            seed: self.seed,
            monitor_every: self.train.monitor_every,
            enumeration_cap: self.enumeration_cap,
            record_wall_clock: self.train.record_wall_clock,
            ..TrainConfig::default()
        }
    }

    pub fn sft_config(&self) -> SftConfig {
        match self.sft.mode {
            SftMode::ClosedForm => SftConfig::ClosedForm { alpha: self.sft.alpha },
            SftMode::Gradient => SftConfig::Gradient {
                lr: self.sft.lr,
                steps: self.sft.steps,
            },
        }
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            spec: InstanceSpec {
                vocab: self.verify.vocab.clone(),
                horizon: self.verify.horizon.clone(),
                max_prompts: self.verify.max_prompts,
                scale: self.verify.scale,
            },
            instances: self.verify.instances,
            seed: self.seed,
            enumeration_cap: self.enumeration_cap,
            regime: Thm5Regime {
                delta: self.verify.regime_delta,
            },
        }
    }
}
