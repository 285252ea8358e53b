use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError};
use crate::blocks::{init_params, BlockParams};
use crate::dsp::{F0Stats, MelSpectrogram};
use crate::rng::{domain, mix_seed, stream};
use crate::tensor::{Mat, Real};

/// Half-width of the uniform initialisation of speaker rows.
const SPEAKER_INIT: f64 = 0.5;

/// Trainable weights of the whole system. `ea` is `None` for the supervised
/// baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams<T> {
    pub ea: Option<BlockParams<T>>,
    pub el: BlockParams<T>,
    pub d1: BlockParams<T>,
    pub d2: BlockParams<T>,
    /// `[n_speakers × speaker_dim]`: the 1×1 projection of a one-hot speaker code.
    pub speakers: Mat<T>,
}

impl<T: Real> SystemParams<T> {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = stream(seed, domain::INIT, 4);
        let speakers = Mat::from_fn(config.n_speakers, config.speaker_dim, |_, _| {
            T::from_f64_lossy(rng.random_range(-SPEAKER_INIT..SPEAKER_INIT))
        });
        Ok(SystemParams {
            ea: config.acoustic_encoder.then(|| init_params(&config.acoustic_block(), mix_seed(seed, 0))),
            el: init_params(&config.linguistic_block(), mix_seed(seed, 1)),
            d1: init_params(&config.d1_block(), mix_seed(seed, 2)),
            d2: init_params(&config.d2_block(), mix_seed(seed, 3)),
            speakers,
        })
    }

    pub fn zeros_like(&self) -> Self {
        SystemParams {
            ea: self.ea.as_ref().map(BlockParams::zeros_like),
            el: self.el.zeros_like(),
            d1: self.d1.zeros_like(),
            d2: self.d2.zeros_like(),
            speakers: Mat::zeros(self.speakers.rows, self.speakers.cols),
        }
    }

    pub fn n_speakers(&self) -> usize {
        self.speakers.rows
    }

    /// Appends a freshly initialised speaker row and returns its index.
    pub fn add_speaker(&mut self, seed: u64) -> usize {
        let mut rng = stream(seed, domain::INIT, 5);
        let row: Vec<T> = (0..self.speakers.cols)
            .map(|_| T::from_f64_lossy(rng.random_range(-SPEAKER_INIT..SPEAKER_INIT)))
            .collect();
        let mut data = std::mem::take(&mut self.speakers.data);
        data.extend(row);
        self.speakers = Mat::from_vec(self.speakers.rows + 1, self.speakers.cols, data);
        self.speakers.rows - 1
    }

    pub fn speaker_row(&self, index: usize) -> Result<&[T], ModelError> {
        if index >= self.speakers.rows {
            return Err(ModelError::UnknownSpeaker { index, n: self.speakers.rows });
        }
        Ok(self.speakers.row(index))
    }

    /// Prefixed tensor names, parallel to [`tensors`](Self::tensors).
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut add = |prefix: &str, b: &BlockParams<T>| out.extend(b.names().into_iter().map(|n| format!("{prefix}/{n}")));
        if let Some(ea) = &self.ea {
            add("ea", ea);
        }
        add("el", &self.el);
        add("d1", &self.d1);
        add("d2", &self.d2);
        out.push("speakers".into());
        out
    }

    pub fn tensors(&self) -> Vec<&Mat<T>> {
        let mut out = Vec::new();
        if let Some(ea) = &self.ea {
            out.extend(ea.tensors());
        }
        out.extend(self.el.tensors());
        out.extend(self.d1.tensors());
        out.extend(self.d2.tensors());
        out.push(&self.speakers);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat<T>> {
        let mut out = Vec::new();
        if let Some(ea) = &mut self.ea {
            out.extend(ea.tensors_mut());
        }
        out.extend(self.el.tensors_mut());
        out.extend(self.d1.tensors_mut());
        out.extend(self.d2.tensors_mut());
        out.push(&mut self.speakers);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|m| m.data.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> SystemParams<U> {
        SystemParams {
            ea: self.ea.as_ref().map(BlockParams::cast),
            el: self.el.cast(),
            d1: self.d1.cast(),
            d2: self.d2.cast(),
            speakers: self.speakers.cast(),
        }
    }

    /// True when every block has the shapes `config` prescribes.
    pub fn matches(&self, config: &ModelConfig) -> bool {
        let ea_ok = match (&self.ea, config.acoustic_encoder) {
            (Some(ea), true) => ea.matches(&config.acoustic_block()),
            (None, false) => true,
            _ => false,
        };
        ea_ok
            && self.el.matches(&config.linguistic_block())
            && self.d1.matches(&config.d1_block())
            && self.d2.matches(&config.d2_block())
            && self.speakers.cols == config.speaker_dim
            && self.speakers.rows == config.n_speakers
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }
}

/// Input normalisation fixed from the training corpus: each mel band is
/// mapped from its observed [min, max] onto [0, 1], and log-F0 uses the
/// corpus range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mel_offset: Vec<f32>,
    pub mel_scale: Vec<f32>,
    pub f0: F0Stats,
}

/// Lower bound on a band's range, so constant bands (such as those always
/// at the floor) do not blow up.
const MIN_RANGE: f32 = 1e-2;

impl FeatureNorm {
    pub fn identity(n_bands: usize, f0: F0Stats) -> Self {
        FeatureNorm { mel_offset: vec![0.0; n_bands], mel_scale: vec![1.0; n_bands], f0 }
    }

    pub fn from_mels<'a>(mels: impl IntoIterator<Item = &'a MelSpectrogram>, f0: F0Stats) -> Option<Self> {
        let mut lo: Vec<f32> = Vec::new();
        let mut hi: Vec<f32> = Vec::new();
        for m in mels {
            let v = &m.values;
            if lo.is_empty() {
                lo = vec![f32::INFINITY; v.cols];
                hi = vec![f32::NEG_INFINITY; v.cols];
            }
            for t in 0..v.rows {
                for (b, &x) in v.row(t).iter().enumerate() {
                    lo[b] = lo[b].min(x);
                    hi[b] = hi[b].max(x);
                }
            }
        }
        if lo.is_empty() || lo[0] > hi[0] {
            return None;
        }
        let scale = lo.iter().zip(&hi).map(|(l, h)| (h - l).max(MIN_RANGE)).collect();
        Some(FeatureNorm { mel_offset: lo, mel_scale: scale, f0 })
    }

    pub fn n_bands(&self) -> usize {
        self.mel_offset.len()
    }

    pub fn normalize(&self, mel: &Mat<f32>) -> Mat<f32> {
        Mat::from_fn(mel.rows, mel.cols, |t, b| (mel.get(t, b) - self.mel_offset[b]) / self.mel_scale[b])
    }

    pub fn denormalize(&self, mel: &Mat<f32>) -> Mat<f32> {
        Mat::from_fn(mel.rows, mel.cols, |t, b| mel.get(t, b) * self.mel_scale[b] + self.mel_offset[b])
    }
}
