use serde::{Deserialize, Serialize};

use super::DspError;
use crate::tensor::Mat;

/// Per-frame fundamental frequency; `f0_hz == 0` exactly on unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub f0_hz: Vec<f32>,
    pub voiced: Vec<bool>,
}

impl F0Track {
    pub fn from_hz(f0_hz: Vec<f32>) -> Self {
        let voiced = f0_hz.iter().map(|&f| f > 0.0).collect();
        F0Track { f0_hz, voiced }
    }

    pub fn unvoiced(n_frames: usize) -> Self {
        F0Track { f0_hz: vec![0.0; n_frames], voiced: vec![false; n_frames] }
    }

    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }
}

/// Range of log-F0 over the voiced frames of a training corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0Stats {
    pub log_min: f64,
    pub log_max: f64,
}

impl F0Stats {
    pub fn from_tracks<'a>(tracks: impl IntoIterator<Item = &'a F0Track>) -> Option<F0Stats> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in tracks {
            for (&f, &v) in t.f0_hz.iter().zip(&t.voiced) {
                if v {
                    let l = (f as f64).ln();
                    lo = lo.min(l);
                    hi = hi.max(l);
                }
            }
        }
        (lo <= hi).then_some(F0Stats { log_min: lo, log_max: hi })
    }
}

/// Two conditioning channels per frame: log-F0 mapped linearly onto [-1, 1]
/// (held at the last voiced value across unvoiced runs, 0 before the first
/// voiced frame) and the voicing flag.
pub fn normalize_f0(track: &F0Track, stats: &F0Stats) -> Result<Mat<f32>, DspError> {
    if track.is_empty() {
        return Err(DspError::EmptyTrack);
    }
    let span = stats.log_max - stats.log_min;
    let mut out = Mat::zeros(track.len(), 2);
    let mut held = 0.0f32;
    for (t, (&f, &v)) in track.f0_hz.iter().zip(&track.voiced).enumerate() {
        if v {
            held = if span > 0.0 { (2.0 * ((f as f64).ln() - stats.log_min) / span - 1.0) as f32 } else { 0.0 };
        }
        out.set(t, 0, held);
        out.set(t, 1, if v { 1.0 } else { 0.0 });
    }
    Ok(out)
}
