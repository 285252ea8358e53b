//! The full system: acoustic and linguistic encoders, the stochastic switch
//! and noise bottleneck, the long-scope decoder `D1` and the short-scope
//! autoregressive decoder `D2`.
//!
//! ```text
//! e   = k·E_A(x) + (1−k)·E_L(y)
//! x̂_i = D2(x_{<i} + ε2, [D1([e + ε1, c]), c])
//! L   = λ_recon·mean(x − x̂)² + λ_enc·mean(E_A(x) − E_L(y))²
//! ```
//!
//! All model-side mel values are per-band scaled to [0, 1]; see
//! [`FeatureNorm`].

mod config;
mod forward;
mod infer;
mod params;

pub use config::{ModelConfig, StageConfig};
pub use forward::{
    control_track, decode_teacher_forced, encode_acoustic, encode_linguistic, loss_and_grads, loss_terms,
    switch_embedding, LossOptions, LossTerms, NoiseDraw, NoiseSpec, TrainingExample,
};
pub use infer::{decode_autoregressive, infer_autoregressive, infer_voice_conversion};
pub use params::{FeatureNorm, SystemParams};

use thiserror::Error;

use crate::blocks::BlockError;
use crate::tensor::{Mat, Real};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("this system has no acoustic encoder")]
    NoAcousticEncoder,
    #[error("linguistic features are required but missing")]
    MissingLabels,
    #[error("acoustic features are required but missing")]
    MissingAcoustic,
    #[error("speaker index {index} out of range ({n} speakers)")]
    UnknownSpeaker { index: usize, n: usize },
    #[error("segment has no valid frames")]
    EmptyMask,
}

/// Frame-wise encoder output `e`, `[frames × embed_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence<T> {
    pub values: Mat<T>,
}

/// Frame-wise decoder conditioning `c`: two F0 channels followed by the
/// speaker embedding repeated on every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrack<T> {
    pub values: Mat<T>,
}

impl<T: Real> EmbeddingSequence<T> {
    pub fn n_frames(&self) -> usize {
        self.values.rows
    }
}

impl<T: Real> ControlTrack<T> {
    pub fn n_frames(&self) -> usize {
        self.values.rows
    }
}
