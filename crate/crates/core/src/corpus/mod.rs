//! Synthetic multi-singer corpus with exact phone labels and F0, plus the
//! dataset plumbing used by training: splits, segment batches and the
//! on-disk feature container.

mod build;
mod features;
mod labels;
mod phones;
mod segments;
mod singer;
mod synth;

pub use build::{build_corpus, build_protocol, compose_song, Corpus, CorpusConfig, ProtocolCorpora};
pub use features::{feature_fingerprint, load_features, save_features};
pub use labels::{
    f0_from_text, f0_points_to_track, intervals_to_frames, phones_end, phones_from_text, read_f0_file,
    read_phone_timing_file, PhoneInterval,
};
pub use phones::{PhoneInventory, PhoneKind};
pub use segments::{Segment, SegmentContext, SegmentSampler};
pub use singer::{generate_singer, Resonance, SingerSpec};
pub use synth::synthesize_utterance;

use thiserror::Error;

use crate::container::ContainerError;
use crate::dsp::{AudioClip, DspError, F0Track, MelSpectrogram};
use crate::tensor::Mat;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid phone inventory: {0}")]
    InvalidInventory(String),
    #[error("unknown phone symbol `{0}`")]
    UnknownPhone(String),
    #[error("invalid score: {0}")]
    InvalidScore(String),
    #[error("note {note_hz:.1} Hz outside singer range [{min:.1}, {max:.1}] Hz")]
    NoteOutOfRange { note_hz: f64, min: f64, max: f64 },
    #[error("invalid corpus layout: {0}")]
    InvalidLayout(String),
    #[error("no utterance is long enough for a segment of {needed} frames")]
    NoUsableUtterance { needed: usize },
    #[error("utterance is missing phone labels")]
    MissingLabels,
    #[error("malformed text file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Frame-wise phone ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinguisticFrames {
    pub phone_id: Vec<u16>,
}

impl LinguisticFrames {
    pub fn len(&self) -> usize {
        self.phone_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phone_id.is_empty()
    }

    /// `[frames × dim]` one-hot rows.
    pub fn one_hot(&self, dim: usize) -> Mat<f32> {
        let mut m = Mat::zeros(self.len(), dim);
        for (t, &p) in self.phone_id.iter().enumerate() {
            m.set(t, p as usize, 1.0);
        }
        m
    }

    pub fn slice(&self, start: usize, end: usize) -> LinguisticFrames {
        LinguisticFrames { phone_id: self.phone_id[start..end].to_vec() }
    }
}

/// One aligned recording. `ling` is `None` for audio-only data.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub audio: AudioClip,
    pub mel: MelSpectrogram,
    pub ling: Option<LinguisticFrames>,
    pub f0: F0Track,
    pub singer_id: u32,
}

impl Utterance {
    pub fn n_frames(&self) -> usize {
        self.mel.n_frames()
    }

    pub fn labels(&self) -> Result<&LinguisticFrames, CorpusError> {
        self.ling.as_ref().ok_or(CorpusError::MissingLabels)
    }

    /// Copy with the phone labels removed.
    pub fn without_labels(&self) -> Utterance {
        Utterance { ling: None, ..self.clone() }
    }

    pub fn duration(&self) -> f64 {
        self.audio.duration()
    }

    pub fn is_aligned(&self) -> bool {
        let n = self.n_frames();
        self.f0.len() == n && self.ling.as_ref().map_or(true, |l| l.len() == n)
    }
}

pub fn total_duration(utts: &[Utterance]) -> f64 {
    utts.iter().map(Utterance::duration).sum()
}
