use super::mel::{MelExtractor, MelSpectrogram};
use super::resample::resample;
use super::{AudioClip, DspError, FeatureConfig};

pub fn semitones_to_factor(semitones: f64) -> f64 {
    (semitones / 12.0).exp2()
}

/// Pitch transposition of the acoustic input: the audio is resampled by
/// `factor` (pitch and formants scale up, duration shrinks), analysed, and
/// the resulting mel-spectrogram is stretched back to `labels_frames` frames
/// so that it stays aligned with the linguistic labels.
#[derive(Clone)]
pub struct TransposeAugmenter {
    extractor: MelExtractor,
}

impl TransposeAugmenter {
    pub fn new(config: &FeatureConfig) -> Result<Self, DspError> {
        Ok(TransposeAugmenter { extractor: MelExtractor::new(config)? })
    }

    pub fn extractor(&self) -> &MelExtractor {
        &self.extractor
    }

    pub fn apply(&self, clip: &AudioClip, labels_frames: usize, factor: f64) -> Result<MelSpectrogram, DspError> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(DspError::InvalidFactor(factor));
        }
        let mut samples = resample(&clip.samples, factor);
        let window = self.extractor.config().window_samples();
        if samples.len() < window {
            samples.resize(window, 0.0);
        }
        let shifted = AudioClip { samples, sample_rate: clip.sample_rate };
        let mel = self.extractor.compute(&shifted)?;
        Ok(mel.resample_frames(labels_frames))
    }
}

pub fn transpose_augment(
    clip: &AudioClip,
    labels_frames: usize,
    factor: f64,
    config: &FeatureConfig,
) -> Result<MelSpectrogram, DspError> {
    TransposeAugmenter::new(config)?.apply(clip, labels_frames, factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::compute_mel;

    #[test]
    fn unit_factor_equals_plain_analysis() {
        let cfg = FeatureConfig::default();
        let clip = AudioClip::tone(330.0, 0.4, 0.4, 32_000);
        let plain = compute_mel(&clip, &cfg).unwrap();
        let aug = transpose_augment(&clip, plain.n_frames(), 1.0, &cfg).unwrap();
        assert_eq!(aug, plain);
    }

    #[test]
    fn non_positive_factor_is_rejected() {
        let cfg = FeatureConfig::default();
        let clip = AudioClip::tone(330.0, 0.1, 0.4, 32_000);
        assert!(matches!(transpose_augment(&clip, 10, -1.0, &cfg), Err(DspError::InvalidFactor(_))));
        assert!(matches!(transpose_augment(&clip, 10, 0.0, &cfg), Err(DspError::InvalidFactor(_))));
    }

    #[test]
    fn semitone_conversion() {
        assert!((semitones_to_factor(12.0) - 2.0).abs() < 1e-15);
        assert!((semitones_to_factor(-4.0) - 2f64.powf(-4.0 / 12.0)).abs() < 1e-15);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]
        #[test]
        fn transposition_keeps_the_label_frame_count(
            semitones in -4.0f64..4.0,
            seconds in 0.05f64..0.4,
        ) {
            let cfg = FeatureConfig::default();
            let clip = AudioClip::tone(262.0, seconds, 0.4, 32_000);
            let frames = compute_mel(&clip, &cfg).unwrap().n_frames();
            let aug = transpose_augment(&clip, frames, semitones_to_factor(semitones), &cfg).unwrap();
            proptest::prop_assert_eq!(aug.n_frames(), frames);
            proptest::prop_assert!(aug.values.data.iter().all(|v| v.is_finite()));
        }
    }
}
