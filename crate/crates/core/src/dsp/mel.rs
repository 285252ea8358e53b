use std::sync::Arc;

use rustfft::num_complex::Complex32;
use rustfft::{Fft, FftPlanner};

use super::{AudioClip, DspError, FeatureConfig};
use crate::tensor::Mat;

/// Frame-major log-mel energies `[n_frames × n_bands]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Mat<f32>,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.rows
    }

    pub fn n_bands(&self) -> usize {
        self.values.cols
    }

    /// Index of the strongest band in frame `t`.
    pub fn argmax_band(&self, t: usize) -> usize {
        let row = self.values.row(t);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }

    /// Linear interpolation along the frame axis to `n_frames` frames.
    pub fn resample_frames(&self, n_frames: usize) -> MelSpectrogram {
        let src = self.n_frames();
        let bands = self.n_bands();
        let mut out = Mat::zeros(n_frames, bands);
        if src == 0 || n_frames == 0 {
            return MelSpectrogram { values: out };
        }
        let scale = if n_frames > 1 { (src - 1) as f64 / (n_frames - 1) as f64 } else { 0.0 };
        for t in 0..n_frames {
            let pos = t as f64 * scale;
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            let w = (pos - i0 as f64) as f32;
            let (a, b) = (self.values.row(i0), self.values.row(i1));
            for (o, (x, y)) in out.row_mut(t).iter_mut().zip(a.iter().zip(b)) {
                *o = x + w * (y - x);
            }
        }
        MelSpectrogram { values: out }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

fn band_edges(n_bands: usize, f_lo: f64, f_hi: f64) -> Vec<f64> {
    let (m_lo, m_hi) = (hz_to_mel(f_lo), hz_to_mel(f_hi));
    (0..n_bands + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_bands + 1) as f64))
        .collect()
}

/// Peak frequency of every band, ascending.
pub fn band_center_frequencies(n_bands: usize, f_lo: f64, f_hi: f64) -> Vec<f64> {
    band_edges(n_bands, f_lo, f_hi)[1..=n_bands].to_vec()
}

/// Triangular filters with unit peaks equally spaced on the HTK mel scale,
/// shape `[n_bands × (n_fft/2 + 1)]`.
pub fn mel_filterbank(
    n_bands: usize,
    f_lo: f64,
    f_hi: f64,
    n_fft: usize,
    sample_rate: u32,
) -> Result<Mat<f32>, DspError> {
    let nyquist = sample_rate as f64 / 2.0;
    if f_hi > nyquist {
        return Err(DspError::AboveNyquist { f_hi, nyquist });
    }
    if !(f_lo < f_hi) || f_lo < 0.0 {
        return Err(DspError::InvalidBandEdges { f_lo, f_hi });
    }
    let edges = band_edges(n_bands, f_lo, f_hi);
    let n_bins = n_fft / 2 + 1;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    Ok(Mat::from_fn(n_bands, n_bins, |b, k| {
        let f = k as f64 * bin_hz;
        let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
        let up = (f - lo) / (mid - lo);
        let down = (hi - f) / (hi - mid);
        up.min(down).max(0.0) as f32
    }))
}

/// Reusable STFT + filterbank pipeline for one [`FeatureConfig`].
#[derive(Clone)]
pub struct MelExtractor {
    config: FeatureConfig,
    fft: Arc<dyn Fft<f32>>,
    window: Vec<f32>,
    filterbank: Mat<f32>,
    n_fft: usize,
}

impl MelExtractor {
    pub fn new(config: &FeatureConfig) -> Result<Self, DspError> {
        let n_fft = config.n_fft();
        let filterbank = mel_filterbank(config.n_bands, config.f_lo, config.f_hi, n_fft, config.sample_rate)?;
        let win = config.window_samples();
        let window = (0..win)
            .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos()) as f32)
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(MelExtractor { config: config.clone(), fft, window, filterbank, n_fft })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &Mat<f32> {
        &self.filterbank
    }

    /// Power spectra of Hann-windowed frames centred on `t · hop`, zero-padded
    /// outside the clip.
    pub fn power_spectrogram(&self, samples: &[f32]) -> Mat<f32> {
        let hop = self.config.hop_samples();
        let win = self.window.len();
        let n_frames = samples.len() / hop + 1;
        let n_bins = self.n_fft / 2 + 1;
        let mut out = Mat::zeros(n_frames, n_bins);
        let mut buf = vec![Complex32::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex32::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for t in 0..n_frames {
            let start = (t * hop) as isize - (win / 2) as isize;
            buf.iter_mut().for_each(|c| *c = Complex32::new(0.0, 0.0));
            let mut any = false;
            for (i, w) in self.window.iter().enumerate() {
                let idx = start + i as isize;
                if idx >= 0 && (idx as usize) < samples.len() {
                    let s = samples[idx as usize];
                    any |= s != 0.0;
                    buf[i] = Complex32::new(s * w, 0.0);
                }
            }
            if !any {
                continue;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (o, c) in out.row_mut(t).iter_mut().zip(&buf[..n_bins]) {
                *o = c.norm_sqr();
            }
        }
        out
    }

    pub fn compute(&self, clip: &AudioClip) -> Result<MelSpectrogram, DspError> {
        let win = self.window.len();
        if clip.samples.len() < win {
            return Err(DspError::ClipTooShort { samples: clip.samples.len(), window: win });
        }
        let power = self.power_spectrogram(&clip.samples);
        let mut mel = Mat::zeros(power.rows, self.config.n_bands);
        crate::tensor::gemm(1.0, power.view(), self.filterbank.view().t(), 0.0, &mut mel.data, self.config.n_bands);
        let floor = self.config.log_floor as f32;
        mel.data.iter_mut().for_each(|v| *v = v.max(floor).ln());
        Ok(MelSpectrogram { values: mel })
    }
}

/// Log-mel spectrogram of `clip`: Hann STFT power, triangular mel filters,
/// then `ln(max(energy, floor))`.
pub fn compute_mel(clip: &AudioClip, config: &FeatureConfig) -> Result<MelSpectrogram, DspError> {
    MelExtractor::new(config)?.compute(clip)
}
