use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::blocks::{
    receptive_field, Activation, BlockConfig, ConditioningMode, OutputLayer, ReceptiveField,
};
use crate::corpus::SegmentContext;

/// Shape of one block: dilated stack plus two-layer output stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub hidden_channels: usize,
    pub out_channels: usize,
}

impl StageConfig {
    fn scaled(&self, divisor: usize) -> StageConfig {
        let d = |c: usize| c.div_ceil(divisor).max(2);
        StageConfig {
            kernel_size: self.kernel_size,
            dilations: self.dilations.clone(),
            residual_channels: d(self.residual_channels),
            skip_channels: d(self.skip_channels),
            hidden_channels: d(self.hidden_channels),
            out_channels: d(self.out_channels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_bands: usize,
    pub n_phones: usize,
    pub speaker_dim: usize,
    pub n_speakers: usize,
    /// `false` gives the supervised baseline: linguistic encoder only.
    pub acoustic_encoder: bool,
    pub encoder: StageConfig,
    pub d1: StageConfig,
    /// `out_channels` must equal `n_bands`.
    pub d2: StageConfig,
    pub d2_conditioning: ConditioningMode,
}

/// Number of F0 conditioning channels (log-F0 and voicing).
pub const F0_CHANNELS: usize = 2;

impl Default for ModelConfig {
    fn default() -> Self {
        let enc = StageConfig {
            kernel_size: 3,
            dilations: vec![1, 2, 4, 1, 2, 4, 1, 2, 4],
            residual_channels: 70,
            skip_channels: 70,
            hidden_channels: 120,
            out_channels: 120,
        };
        ModelConfig {
            n_bands: 100,
            n_phones: 12,
            speaker_dim: 16,
            n_speakers: 7,
            acoustic_encoder: true,
            d1: StageConfig { dilations: vec![1, 2, 4, 1, 2, 4, 1, 2, 4, 1], ..enc.clone() },
            encoder: enc,
            d2: StageConfig {
                kernel_size: 2,
                dilations: vec![1, 2, 4, 8, 16, 1, 2, 4],
                residual_channels: 200,
                skip_channels: 200,
                hidden_channels: 200,
                out_channels: 100,
            },
            d2_conditioning: ConditioningMode::PerLayer,
        }
    }
}

impl ModelConfig {
    /// Full-size network.
    pub fn full() -> Self {
        Self::default()
    }

    /// Same topology with every channel count divided by `divisor`; mel
    /// bands and inventory size are unchanged.
    pub fn scaled(divisor: usize) -> Self {
        let full = Self::default();
        ModelConfig {
            encoder: full.encoder.scaled(divisor),
            d1: full.d1.scaled(divisor),
            d2: StageConfig { out_channels: full.n_bands, ..full.d2.scaled(divisor) },
            ..full
        }
    }

    /// Desk-scale model: a quarter of the channels.
    pub fn toy() -> Self {
        Self::scaled(4)
    }

    /// Tiny network for finite-difference checks.
    pub fn micro() -> Self {
        let stage = |k: usize, dil: Vec<usize>, out: usize| StageConfig {
            kernel_size: k,
            dilations: dil,
            residual_channels: 4,
            skip_channels: 3,
            hidden_channels: 5,
            out_channels: out,
        };
        ModelConfig {
            n_bands: 6,
            n_phones: 5,
            speaker_dim: 2,
            n_speakers: 3,
            acoustic_encoder: true,
            encoder: stage(3, vec![1, 2], 4),
            d1: stage(3, vec![1, 2], 3),
            d2: stage(2, vec![1, 2], 6),
            d2_conditioning: ConditioningMode::PerLayer,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.out_channels
    }

    /// Width of `c`.
    pub fn control_dim(&self) -> usize {
        F0_CHANNELS + self.speaker_dim
    }

    fn block(&self, stage: &StageConfig, in_dim: usize, causal: bool, last: Activation) -> BlockConfig {
        BlockConfig {
            in_dim,
            kernel_size: stage.kernel_size,
            dilations: stage.dilations.clone(),
            residual_channels: stage.residual_channels,
            skip_channels: stage.skip_channels,
            causal,
            output_stack: [
                OutputLayer { channels: stage.hidden_channels, activation: Activation::LeakyRelu },
                OutputLayer { channels: stage.out_channels, activation: last },
            ],
            cond_dim: 0,
            cond_mode: ConditioningMode::PerLayer,
        }
    }

    pub fn acoustic_block(&self) -> BlockConfig {
        self.block(&self.encoder, self.n_bands, false, Activation::Tanh)
    }

    pub fn linguistic_block(&self) -> BlockConfig {
        self.block(&self.encoder, self.n_phones, false, Activation::Tanh)
    }

    /// `D1` reads `[e + ε1, c]` as its input.
    pub fn d1_block(&self) -> BlockConfig {
        self.block(&self.d1, self.embed_dim() + self.control_dim(), false, Activation::Tanh)
    }

    /// `D2` reads the shifted mel history and is conditioned on `[D1, c]`.
    pub fn d2_block(&self) -> BlockConfig {
        BlockConfig {
            cond_dim: self.d1.out_channels + self.control_dim(),
            cond_mode: self.d2_conditioning,
            ..self.block(&self.d2, self.n_bands, true, Activation::Identity)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.d2.out_channels != self.n_bands {
            return bad("d2.out_channels must equal n_bands");
        }
        if self.n_phones < 2 || self.n_bands == 0 || self.speaker_dim == 0 || self.n_speakers == 0 {
            return bad("n_phones >= 2 and positive n_bands, speaker_dim, n_speakers required");
        }
        for b in [self.acoustic_block(), self.linguistic_block(), self.d1_block(), self.d2_block()] {
            b.validate()?;
        }
        if !self.d2_block().causal {
            return bad("d2 must be causal");
        }
        Ok(())
    }

    pub fn encoder_field(&self) -> ReceptiveField {
        receptive_field(&self.acoustic_block())
    }

    pub fn d1_field(&self) -> ReceptiveField {
        receptive_field(&self.d1_block())
    }

    pub fn d2_field(&self) -> ReceptiveField {
        receptive_field(&self.d2_block())
    }

    /// Context that keeps every valid output free of padding effects:
    /// encoder and `D1` fields on both sides, plus the `D2` history and the
    /// one-frame teacher-forcing shift on the left.
    pub fn segment_context(&self) -> SegmentContext {
        let (e, d1, d2) = (self.encoder_field(), self.d1_field(), self.d2_field());
        SegmentContext { left: e.past + d1.past + d2.past + 1, right: e.future + d1.future }
    }

    /// Same network shapes, ignoring the number of speaker rows, which grows
    /// when a voice is added.
    pub fn architecture_fingerprint(&self) -> String {
        let mut c = self.clone();
        c.n_speakers = 0;
        crate::container::fingerprint_of(&c)
    }
}
