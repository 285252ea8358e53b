//! Classical iterative phase reconstruction for listening to predicted
//! mel-spectrograms. Not a neural vocoder; quality is rough by nature.

use rustfft::num_complex::Complex32;
use rustfft::FftPlanner;

use super::mel::{MelExtractor, MelSpectrogram};
use super::{AudioClip, DspError, FeatureConfig};

/// Inverts the log-mel compression and filterbank approximately (transpose
/// with per-bin normalisation), then runs `iterations` rounds of
/// Griffin-Lim phase estimation.
pub fn griffin_lim(mel: &MelSpectrogram, config: &FeatureConfig, iterations: usize) -> Result<AudioClip, DspError> {
    let extractor = MelExtractor::new(config)?;
    let fb = extractor.filterbank();
    let n_fft = config.n_fft();
    let n_bins = n_fft / 2 + 1;
    let hop = config.hop_samples();
    let win = config.window_samples();
    let n_frames = mel.n_frames();
    let floor = config.log_floor as f32;

    let col_norm: Vec<f32> = (0..n_bins).map(|k| (0..fb.rows).map(|b| fb.get(b, k)).sum()).collect();
    let mut magnitude = vec![0.0f32; n_frames * n_bins];
    for t in 0..n_frames {
        let energies: Vec<f32> = mel.values.row(t).iter().map(|v| (v.exp() - floor).max(0.0)).collect();
        for k in 0..n_bins {
            if col_norm[k] > 0.0 {
                let p: f32 = (0..fb.rows).map(|b| fb.get(b, k) * energies[b]).sum::<f32>() / col_norm[k];
                magnitude[t * n_bins + k] = p.max(0.0).sqrt();
            }
        }
    }

    let window: Vec<f32> = (0..win)
        .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos()) as f32)
        .collect();
    let n_samples = (n_frames.saturating_sub(1)) * hop;
    let mut planner = FftPlanner::<f32>::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);

    // Zero initial phase is deterministic; a few iterations recover a usable signal.
    let mut spectrum: Vec<Complex32> = magnitude.iter().map(|&m| Complex32::new(m, 0.0)).collect();
    let mut audio = vec![0.0f32; n_samples.max(1)];
    let mut buf = vec![Complex32::new(0.0, 0.0); n_fft];
    for iter in 0..=iterations {
        // Inverse STFT with weighted overlap-add.
        let mut acc = vec![0.0f32; audio.len()];
        let mut norm = vec![0.0f32; audio.len()];
        for t in 0..n_frames {
            buf.iter_mut().for_each(|c| *c = Complex32::new(0.0, 0.0));
            for k in 0..n_bins {
                buf[k] = spectrum[t * n_bins + k];
                if k > 0 && k < n_fft - k {
                    buf[n_fft - k] = spectrum[t * n_bins + k].conj();
                }
            }
            inv.process(&mut buf);
            let start = (t * hop) as isize - (win / 2) as isize;
            for (i, w) in window.iter().enumerate() {
                let idx = start + i as isize;
                if idx >= 0 && (idx as usize) < acc.len() {
                    acc[idx as usize] += buf[i].re / n_fft as f32 * w;
                    norm[idx as usize] += w * w;
                }
            }
        }
        for ((a, s), n) in audio.iter_mut().zip(&acc).zip(&norm) {
            *a = if *n > 1e-8 { s / n } else { 0.0 };
        }
        if iter == iterations {
            break;
        }
        // Re-analyse and keep only the phase.
        for t in 0..n_frames {
            buf.iter_mut().for_each(|c| *c = Complex32::new(0.0, 0.0));
            let start = (t * hop) as isize - (win / 2) as isize;
            for (i, w) in window.iter().enumerate() {
                let idx = start + i as isize;
                if idx >= 0 && (idx as usize) < audio.len() {
                    buf[i] = Complex32::new(audio[idx as usize] * w, 0.0);
                }
            }
            fwd.process(&mut buf);
            for k in 0..n_bins {
                let c = buf[k];
                let mag = magnitude[t * n_bins + k];
                let r = c.norm();
                spectrum[t * n_bins + k] =
                    if r > 1e-12 { c * (mag / r) } else { Complex32::new(mag, 0.0) };
            }
        }
    }
    let peak = audio.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        audio.iter_mut().for_each(|v| *v /= peak);
    }
    AudioClip::new(audio, config.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::compute_mel;

    #[test]
    fn reconstructs_a_tone_with_the_right_pitch() {
        let cfg = FeatureConfig::default();
        let clip = AudioClip::tone(440.0, 0.3, 0.5, 32_000);
        let mel = compute_mel(&clip, &cfg).unwrap();
        let audio = griffin_lim(&mel, &cfg, 8).unwrap();
        assert_eq!(audio.samples.len(), (mel.n_frames() - 1) * cfg.hop_samples());
        let back = compute_mel(&audio, &cfg).unwrap();
        let mid = back.n_frames() / 2;
        assert_eq!(back.argmax_band(mid), mel.argmax_band(mid));
    }
}
