use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, DspError};

/// Reads a mono PCM WAV file (16-bit integer or 32-bit float).
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, DspError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(DspError::MissingFile(path.display().to_string()));
    }
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(DspError::ChannelsUnsupported(spec.channels));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(DspError::UnsupportedEncoding(format!("{bits}-bit {fmt:?}")));
        }
    };
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes 16-bit mono PCM, clipping to [-1, 1].
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), DspError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec)?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v)?;
    }
    w.finalize()?;
    Ok(())
}
