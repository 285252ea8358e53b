use std::path::Path;

use super::phones::PhoneInventory;
use super::{CorpusError, LinguisticFrames, Utterance};
use crate::container::{fingerprint_of, Container, ContainerError};
use crate::dsp::{AudioClip, F0Track, FeatureConfig, MelSpectrogram};
use crate::tensor::Mat;

/// Identifies the analysis settings and phone inventory a feature set was
/// computed with.
pub fn feature_fingerprint(config: &FeatureConfig, inventory: &PhoneInventory) -> String {
    fingerprint_of(&(config, inventory.symbols()))
}

/// Writes utterances as `NNNNN/{audio,mel,f0,phones}` tensors.
pub fn save_features(
    utterances: &[Utterance],
    path: impl AsRef<Path>,
    config: &FeatureConfig,
    inventory: &PhoneInventory,
) -> Result<(), CorpusError> {
    let mut c = Container::new(feature_fingerprint(config, inventory));
    c.metadata = serde_json::json!({
        "kind": "features",
        "count": utterances.len(),
        "singers": utterances.iter().map(|u| u.singer_id).collect::<Vec<_>>(),
        "sample_rates": utterances.iter().map(|u| u.audio.sample_rate).collect::<Vec<_>>(),
        "config": config,
        "inventory": inventory.symbols(),
    });
    for (i, u) in utterances.iter().enumerate() {
        c.push_f32(format!("{i:05}/audio"), u.audio.samples.clone());
        c.push_mat(format!("{i:05}/mel"), &u.mel.values);
        c.push_f32(format!("{i:05}/f0"), u.f0.f0_hz.clone());
        if let Some(l) = &u.ling {
            c.push_i32(format!("{i:05}/phones"), l.phone_id.iter().map(|&p| p as i32).collect());
        }
    }
    c.write(path)?;
    Ok(())
}

pub fn load_features(
    path: impl AsRef<Path>,
    config: &FeatureConfig,
    inventory: &PhoneInventory,
) -> Result<Vec<Utterance>, CorpusError> {
    let c = Container::read(path)?;
    c.check_fingerprint(&feature_fingerprint(config, inventory))?;
    let corrupt = |m: &str| CorpusError::Container(ContainerError::CorruptHeader(m.to_string()));
    let count = c.metadata["count"].as_u64().ok_or_else(|| corrupt("missing count"))? as usize;
    let singers = c.metadata["singers"].as_array().ok_or_else(|| corrupt("missing singers"))?;
    let rates = c.metadata["sample_rates"].as_array().ok_or_else(|| corrupt("missing sample_rates"))?;
    if singers.len() != count || rates.len() != count {
        return Err(corrupt("per-utterance metadata length mismatch"));
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mel: Mat<f32> = c.get_mat(&format!("{i:05}/mel"))?;
        let audio = c.get_f32(&format!("{i:05}/audio"))?.to_vec();
        let f0 = c.get_f32(&format!("{i:05}/f0"))?.to_vec();
        let name = format!("{i:05}/phones");
        let ling = if c.contains(&name) {
            Some(LinguisticFrames { phone_id: c.get_i32(&name)?.iter().map(|&p| p as u16).collect() })
        } else {
            None
        };
        out.push(Utterance {
            audio: AudioClip { samples: audio, sample_rate: rates[i].as_u64().unwrap_or(0) as u32 },
            mel: MelSpectrogram { values: mel },
            ling,
            f0: F0Track::from_hz(f0),
            singer_id: singers[i].as_u64().ok_or_else(|| corrupt("bad singer id"))? as u32,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_corpus;
    use crate::dsp::MelExtractor;

    #[test]
    fn save_load_round_trip_is_exact() {
        let cfg = FeatureConfig::default();
        let inv = PhoneInventory::standard();
        let ex = MelExtractor::new(&cfg).unwrap();
        let mut utts = build_corpus(1, 2, 1, 1.5, 4, &inv, &ex).unwrap().train;
        utts.push(utts[0].without_labels());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.tt");
        save_features(&utts, &p, &cfg, &inv).unwrap();
        let back = load_features(&p, &cfg, &inv).unwrap();
        assert_eq!(back, utts);
    }

    #[test]
    fn empty_dataset_round_trips() {
        let cfg = FeatureConfig::default();
        let inv = PhoneInventory::standard();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.tt");
        save_features(&[], &p, &cfg, &inv).unwrap();
        assert!(load_features(&p, &cfg, &inv).unwrap().is_empty());
    }

    #[test]
    fn mismatched_band_count_is_a_fingerprint_error() {
        let cfg = FeatureConfig::default();
        let inv = PhoneInventory::standard();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.tt");
        save_features(&[], &p, &cfg, &inv).unwrap();
        let other = FeatureConfig { n_bands: 80, ..cfg };
        assert!(matches!(
            load_features(&p, &other, &inv),
            Err(CorpusError::Container(ContainerError::FingerprintMismatch { .. }))
        ));
    }
}
