use super::EvalError;
use crate::corpus::{f0_points_to_track, intervals_to_frames, phones_end, PhoneInterval, PhoneInventory};
use crate::dsp::{normalize_f0, resample, AudioClip, MelExtractor, MelSpectrogram};
use crate::model::{infer_autoregressive, infer_voice_conversion};
use crate::train::Checkpoint;

/// The phone inventory a checkpoint was trained with.
pub fn checkpoint_inventory(ckpt: &Checkpoint) -> Result<PhoneInventory, EvalError> {
    Ok(PhoneInventory::with_size(ckpt.model.n_phones)?)
}

fn speaker_row(ckpt: &Checkpoint, singer: u32) -> Result<usize, EvalError> {
    ckpt.speaker_row(singer).ok_or(EvalError::UnknownSpeaker(singer))
}

/// Predicts the mel-spectrogram of a timed phone sequence sung on an F0
/// curve (`(time_s, f0_hz)` points). The two inputs must end within one
/// frame of each other; the output covers the phone timing.
pub fn synthesize(
    ckpt: &Checkpoint,
    phones: &[PhoneInterval],
    f0_points: &[(f64, f64)],
    singer: u32,
) -> Result<MelSpectrogram, EvalError> {
    let rate = ckpt.features.frame_rate();
    let end = phones_end(phones);
    let f0_end = f0_points.last().map_or(0.0, |p| p.0);
    if (end - f0_end).abs() * rate > 1.0 {
        return Err(EvalError::DurationMismatch { phones: end, f0: f0_end });
    }
    let row = speaker_row(ckpt, singer)?;
    let n = ckpt.features.n_frames((end * ckpt.features.sample_rate as f64).round() as usize);
    let silence = checkpoint_inventory(ckpt)?.silence_id();
    let one_hot = intervals_to_frames(phones, n, rate, silence).one_hot(ckpt.model.n_phones);
    let f0 = normalize_f0(&f0_points_to_track(f0_points, n, rate), &ckpt.norm.f0)?;
    let pred = infer_autoregressive(&ckpt.params, &ckpt.model, &one_hot, &f0, row)?;
    Ok(MelSpectrogram { values: ckpt.norm.denormalize(&pred) })
}

/// Re-renders `source` in the voice of `singer`, driven by the acoustic
/// encoder. Audio at another sample rate is resampled first.
pub fn convert(
    ckpt: &Checkpoint,
    source: &AudioClip,
    f0_points: &[(f64, f64)],
    singer: u32,
) -> Result<MelSpectrogram, EvalError> {
    let row = speaker_row(ckpt, singer)?;
    let target_rate = ckpt.features.sample_rate;
    let clip = if source.sample_rate == target_rate {
        source.clone()
    } else {
        let factor = source.sample_rate as f64 / target_rate as f64;
        AudioClip { samples: resample(&source.samples, factor), sample_rate: target_rate }
    };
    let mel = MelExtractor::new(&ckpt.features)?.compute(&clip)?;
    let n = mel.n_frames();
    let f0 = normalize_f0(&f0_points_to_track(f0_points, n, ckpt.features.frame_rate()), &ckpt.norm.f0)?;
    let pred = infer_voice_conversion(&ckpt.params, &ckpt.model, &ckpt.norm.normalize(&mel.values), &f0, row)?;
    Ok(MelSpectrogram { values: ckpt.norm.denormalize(&pred) })
}
