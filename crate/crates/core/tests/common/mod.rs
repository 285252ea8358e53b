#![allow(dead_code)]

use timbre_core::corpus::{build_protocol, CorpusConfig, ProtocolCorpora};
use timbre_core::dsp::{FeatureConfig, MelExtractor};
use timbre_core::model::ModelConfig;
use timbre_core::train::TrainConfig;

/// Few-band features so that micro models train in milliseconds.
pub fn features() -> FeatureConfig {
    FeatureConfig { n_bands: 6, ..FeatureConfig::default() }
}

/// Two labelled singers plus a held-out target, two-second songs.
pub fn corpora(seed: u64) -> ProtocolCorpora {
    let cfg = CorpusConfig {
        inventory_size: 5,
        n_singers: 2,
        songs_per_singer: 2,
        validation_songs: 1,
        song_seconds: 2.0,
        target_songs: 2,
        target_validation_songs: 1,
        clone_seconds: 1.0,
    };
    build_protocol(&cfg, seed, &MelExtractor::new(&features()).unwrap()).unwrap()
}

pub fn model() -> ModelConfig {
    ModelConfig::micro()
}

pub fn train(steps: u64) -> TrainConfig {
    TrainConfig { batch_size: 2, valid_frames: 16, max_steps: steps, clone_steps: steps, warmup_steps: 10, seed: 9, ..TrainConfig::default() }
}
