use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AdamState, TrainConfig, TrainError};
use crate::container::{fingerprint_of, Container};
use crate::corpus::Utterance;
use crate::dsp::{F0Stats, FeatureConfig};
use crate::model::{FeatureNorm, ModelConfig, SystemParams};
use crate::tensor::Mat;

/// Which objective a checkpoint is being trained under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Joint training of encoders and decoder on labelled audio.
    Supervised,
    /// Decoder-only training behind the frozen acoustic encoder.
    Adapt,
}

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub features: FeatureConfig,
    pub phase: Phase,
    /// Updates completed in the current phase.
    pub step: u64,
    pub params: SystemParams<f32>,
    pub optimizer: AdamState<f32>,
    pub norm: FeatureNorm,
    /// Singer id of each speaker-table row.
    pub speakers: Vec<u32>,
    pub corpus_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    model: ModelConfig,
    train: TrainConfig,
    train_fingerprint: String,
    features: FeatureConfig,
    phase: Phase,
    step: u64,
    adam_t: u64,
    f0: F0Stats,
    speakers: Vec<u32>,
    corpus_fingerprint: String,
}

const KIND: &str = "checkpoint";

impl Checkpoint {
    /// Speaker-table row of a singer.
    pub fn speaker_row(&self, singer_id: u32) -> Option<usize> {
        self.speakers.iter().position(|&s| s == singer_id)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(self.model.architecture_fingerprint());
        let meta = Meta {
            kind: KIND.into(),
            model: self.model.clone(),
            train: self.train.clone(),
            train_fingerprint: fingerprint_of(&self.train),
            features: self.features.clone(),
            phase: self.phase,
            step: self.step,
            adam_t: self.optimizer.t,
            f0: self.norm.f0,
            speakers: self.speakers.clone(),
            corpus_fingerprint: self.corpus_fingerprint.clone(),
        };
        c.metadata = serde_json::to_value(meta).expect("metadata serializes");
        let names = self.params.names();
        for ((name, p), (m, v)) in
            names.iter().zip(self.params.tensors()).zip(self.optimizer.m.iter().zip(&self.optimizer.v))
        {
            c.push_mat(format!("params/{name}"), p);
            c.push_mat(format!("adam_m/{name}"), m);
            c.push_mat(format!("adam_v/{name}"), v);
        }
        c.push_f32("norm/mel_offset", self.norm.mel_offset.clone());
        c.push_f32("norm/mel_scale", self.norm.mel_scale.clone());
        c
    }

    /// Rebuilds a checkpoint; with `expected`, refuses a different
    /// architecture.
    pub fn from_container(c: &Container, expected: Option<&ModelConfig>) -> Result<Self, TrainError> {
        let meta: Meta = serde_json::from_value(c.metadata.clone())
            .map_err(|e| TrainError::Incompatible(format!("metadata: {e}")))?;
        if meta.kind != KIND {
            return Err(TrainError::Incompatible(format!("container holds `{}`, not a checkpoint", meta.kind)));
        }
        c.check_fingerprint(&meta.model.architecture_fingerprint())?;
        if let Some(exp) = expected {
            c.check_fingerprint(&exp.architecture_fingerprint())?;
        }
        let mut params = SystemParams::<f32>::init(&meta.model, 0)?;
        let names = params.names();
        let mut m = Vec::with_capacity(names.len());
        let mut v = Vec::with_capacity(names.len());
        for (name, t) in names.iter().zip(params.tensors_mut()) {
            let load = |prefix: &str| -> Result<Mat<f32>, TrainError> {
                let x = c.get_mat::<f32>(&format!("{prefix}/{name}"))?;
                if x.shape() != t.shape() {
                    return Err(TrainError::Incompatible(format!("{prefix}/{name} has shape {:?}", x.shape())));
                }
                Ok(x)
            };
            let p = load("params")?;
            m.push(load("adam_m")?);
            v.push(load("adam_v")?);
            *t = p;
        }
        let norm = FeatureNorm {
            mel_offset: c.get_f32("norm/mel_offset")?.to_vec(),
            mel_scale: c.get_f32("norm/mel_scale")?.to_vec(),
            f0: meta.f0,
        };
        if norm.n_bands() != meta.model.n_bands || meta.speakers.len() != meta.model.n_speakers {
            return Err(TrainError::Incompatible("normalisation or speaker map does not match the model".into()));
        }
        Ok(Checkpoint {
            model: meta.model,
            train: meta.train,
            features: meta.features,
            phase: meta.phase,
            step: meta.step,
            params,
            optimizer: AdamState { m, v, t: meta.adam_t },
            norm,
            speakers: meta.speakers,
            corpus_fingerprint: meta.corpus_fingerprint,
        })
    }
}

/// Atomic write (temporary file, then rename).
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), TrainError> {
    Ok(ckpt.to_container().write(path)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Checkpoint, TrainError> {
    Checkpoint::from_container(&Container::read(path)?, expected)
}

/// Digest of the training material: singer ids, shapes and mel bytes.
pub fn corpus_fingerprint(utts: &[Utterance]) -> String {
    let mut h = Sha256::new();
    for u in utts {
        h.update(u.singer_id.to_le_bytes());
        h.update((u.n_frames() as u64).to_le_bytes());
        for v in &u.mel.values.data {
            h.update(v.to_le_bytes());
        }
        if let Some(l) = &u.ling {
            for p in &l.phone_id {
                h.update(p.to_le_bytes());
            }
        }
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}
