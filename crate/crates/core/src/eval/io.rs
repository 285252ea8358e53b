use std::path::Path;

use serde_json::json;

use super::EvalError;
use crate::container::{fingerprint_of, Container, ContainerError};
use crate::dsp::{FeatureConfig, MelSpectrogram};

const KIND: &str = "mel";

/// Writes a mel-spectrogram together with its analysis parameters.
pub fn save_mel(mel: &MelSpectrogram, features: &FeatureConfig, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let mut c = Container::new(fingerprint_of(features));
    c.metadata = json!({ "kind": KIND, "features": features, "frame_rate": features.frame_rate() });
    c.push_mat("mel", &mel.values);
    Ok(c.write(path)?)
}

pub fn load_mel(path: impl AsRef<Path>) -> Result<(MelSpectrogram, FeatureConfig), EvalError> {
    let c = Container::read(path)?;
    let corrupt = |m: &str| EvalError::Container(ContainerError::CorruptHeader(m.into()));
    if c.metadata.get("kind").and_then(|k| k.as_str()) != Some(KIND) {
        return Err(corrupt("container does not hold a mel-spectrogram"));
    }
    let features: FeatureConfig = serde_json::from_value(c.metadata["features"].clone())
        .map_err(|e| corrupt(&format!("feature metadata: {e}")))?;
    c.check_fingerprint(&fingerprint_of(&features))?;
    Ok((MelSpectrogram { values: c.get_mat("mel")? }, features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Mat;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let mel = MelSpectrogram { values: Mat::from_fn(7, 100, |t, b| (t * 3 + b) as f32 * 0.1 - 5.0) };
        let f = FeatureConfig::default();
        save_mel(&mel, &f, &p).unwrap();
        let (back, f2) = load_mel(&p).unwrap();
        assert_eq!(back, mel);
        assert_eq!(f2, f);
    }

    #[test]
    fn corrupt_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.bin");
        std::fs::write(&p, b"not a container").unwrap();
        assert!(load_mel(&p).is_err());
    }
}
