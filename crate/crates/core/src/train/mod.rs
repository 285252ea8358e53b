//! Optimisation: learning-rate schedule, Adam, checkpoints and the three
//! training phases (joint supervised training, decoder adaptation from
//! audio alone, and cloning from a few minutes of data).

mod adam;
mod checkpoint;
mod session;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use checkpoint::{corpus_fingerprint, load_checkpoint, save_checkpoint, Checkpoint, Phase};
pub use session::{adapt_decoder, clone_voice, initial_checkpoint, train_supervised, AdaptOptions, StepRecord, Trainer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::ContainerError;
use crate::corpus::CorpusError;
use crate::dsp::DspError;
use crate::model::{LossOptions, ModelError, NoiseSpec};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint incompatible: {0}")]
    Incompatible(String),
    #[error("training data is empty or has no voiced frames")]
    EmptyCorpus,
    #[error("frozen tensor `{0}` received a nonzero gradient")]
    FrozenGradient(String),
    #[error("loss diverged at step {step}")]
    Diverged { step: u64, checkpoint: Box<Checkpoint> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Factors are drawn uniformly in log-frequency within ± this many semitones.
    pub max_semitones: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { enabled: true, max_semitones: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    /// Loss-contributing frames per segment.
    pub valid_frames: usize,
    pub max_steps: u64,
    /// Update budget for cloning.
    pub clone_steps: u64,
    pub base_lr: f64,
    pub warmup_steps: u64,
    /// Multiplier applied per `decay_steps` after warm-up.
    pub decay_factor: f64,
    pub decay_steps: u64,
    pub adam: AdamConfig,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    pub loss: LossOptions,
    pub noise: NoiseSpec,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            batch_size: 12,
            valid_frames: 300,
            max_steps: 20_000,
            clone_steps: 3000,
            base_lr: 5e-4,
            warmup_steps: 700,
            decay_factor: 0.15,
            decay_steps: 10_000,
            adam: AdamConfig::default(),
            clip_norm: 5.0,
            loss: LossOptions::default(),
            noise: NoiseSpec::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.batch_size == 0 || self.valid_frames == 0 {
            return bad("batch_size and valid_frames must be positive");
        }
        if self.warmup_steps == 0 || self.decay_steps == 0 {
            return bad("warmup_steps and decay_steps must be >= 1");
        }
        if !(self.base_lr > 0.0) || !(self.decay_factor > 0.0) || !(self.clip_norm > 0.0) {
            return bad("base_lr, decay_factor and clip_norm must be positive");
        }
        if self.noise.sigma1 < 0.0 || self.noise.sigma2 < 0.0 || !(0.0..=1.0).contains(&self.noise.switch_p) {
            return bad("noise sigmas must be >= 0 and switch_p in [0, 1]");
        }
        if self.augment.max_semitones < 0.0 {
            return bad("augment.max_semitones must be >= 0");
        }
        Ok(())
    }
}

/// `base · min(step / warmup, 1) · decay^(max(0, step − warmup) / decay_steps)`.
pub fn lr_schedule(step: u64, config: &TrainConfig) -> f64 {
    let s = step as f64;
    let w = config.warmup_steps as f64;
    let ramp = (s / w).min(1.0);
    let decay = config.decay_factor.powf((s - w).max(0.0) / config.decay_steps as f64);
    config.base_lr * ramp * decay
}
