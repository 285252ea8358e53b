//! Audio I/O, log-mel feature extraction, F0 conditioning and the
//! pitch-transposition augmentation.

mod augment;
mod f0;
mod mel;
mod phase;
pub(crate) mod resample;
mod wav;

pub use augment::{semitones_to_factor, transpose_augment, TransposeAugmenter};
pub use f0::{normalize_f0, F0Stats, F0Track};
pub use mel::{band_center_frequencies, compute_mel, hz_to_mel, mel_filterbank, mel_to_hz, MelExtractor, MelSpectrogram};
pub use phase::griffin_lim;
pub use resample::resample;
pub use wav::{load_wav, save_wav};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("audio file not found: {0}")]
    MissingFile(String),
    #[error("channels unsupported: expected mono, file has {0} channels")]
    ChannelsUnsupported(u16),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("wav i/o error: {0}")]
    Wav(#[from] hound::Error),
    #[error("clip of {samples} samples is shorter than one analysis window ({window} samples)")]
    ClipTooShort { samples: usize, window: usize },
    #[error("upper band edge {f_hi} Hz exceeds Nyquist frequency {nyquist} Hz")]
    AboveNyquist { f_hi: f64, nyquist: f64 },
    #[error("invalid band edges: {f_lo} Hz must be below {f_hi} Hz")]
    InvalidBandEdges { f_lo: f64, f_hi: f64 },
    #[error("transposition factor must be positive, got {0}")]
    InvalidFactor(f64),
    #[error("empty F0 track")]
    EmptyTrack,
    #[error("audio contains non-finite samples")]
    NonFinite,
}

/// Mono audio with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, DspError> {
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(DspError::NonFinite);
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn silence(n: usize, sample_rate: u32) -> Self {
        AudioClip { samples: vec![0.0; n], sample_rate }
    }

    /// Sine of amplitude `amp` at `freq` Hz.
    pub fn tone(freq: f64, seconds: f64, amp: f32, sample_rate: u32) -> Self {
        let n = (seconds * sample_rate as f64).round() as usize;
        let w = 2.0 * std::f64::consts::PI * freq / sample_rate as f64;
        let samples = (0..n).map(|i| amp * (w * i as f64).sin() as f32).collect();
        AudioClip { samples, sample_rate }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Analysis parameters for the acoustic features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub n_bands: usize,
    pub hop_ms: f64,
    pub window_ms: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sample_rate: 32_000,
            n_bands: 100,
            hop_ms: 5.0,
            window_ms: 45.0,
            f_lo: 10.0,
            f_hi: 15_200.0,
            log_floor: 1e-5,
        }
    }
}

impl FeatureConfig {
    pub fn hop_samples(&self) -> usize {
        (self.sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    pub fn window_samples(&self) -> usize {
        (self.sample_rate as f64 * self.window_ms / 1000.0).round() as usize
    }

    pub fn n_fft(&self) -> usize {
        self.window_samples().next_power_of_two()
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop_samples() as f64
    }

    /// `floor(n_samples / hop) + 1`.
    pub fn n_frames(&self, n_samples: usize) -> usize {
        n_samples / self.hop_samples() + 1
    }

    pub fn floor_value(&self) -> f32 {
        self.log_floor.ln() as f32
    }

    pub fn frames_for_seconds(&self, seconds: f64) -> usize {
        (seconds * self.frame_rate()).round() as usize
    }
}
