use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::phones::PhoneInventory;
use super::singer::{generate_singer, SingerSpec};
use super::synth::synthesize_utterance;
use super::{total_duration, CorpusError, Utterance};
use crate::dsp::MelExtractor;
use crate::rng::{domain, mix_seed, stream};

/// Shape of the synthetic experiment data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub inventory_size: usize,
    /// Singers in the labelled multi-singer set.
    pub n_singers: usize,
    pub songs_per_singer: usize,
    /// Songs per singer held out for validation.
    pub validation_songs: usize,
    pub song_seconds: f64,
    /// Songs of the held-out target singer.
    pub target_songs: usize,
    pub target_validation_songs: usize,
    /// Duration of the cloning subset drawn from the target training songs.
    pub clone_seconds: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            inventory_size: 12,
            n_singers: 7,
            songs_per_singer: 10,
            validation_songs: 1,
            song_seconds: 20.0,
            target_songs: 12,
            target_validation_songs: 1,
            clone_seconds: 180.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub singers: Vec<SingerSpec>,
    pub train: Vec<Utterance>,
    pub validation: Vec<Utterance>,
}

/// Everything the three-phase protocol needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolCorpora {
    pub inventory: PhoneInventory,
    /// Labelled multi-singer data for supervised pretraining.
    pub multi: Corpus,
    /// Held-out singer; labels are present but the unsupervised phases strip them.
    pub target: Corpus,
    /// Prefix of `target.train` of roughly `clone_seconds`.
    pub cloning: Vec<Utterance>,
}

/// A random phrase-structured song: leading and trailing silence, phrases of
/// (optional fricative + vowel) syllables on notes of a major pentatonic scale
/// inside the singer's range, separated by short rests.
pub fn compose_song(
    rng: &mut ChaCha8Rng,
    spec: &SingerSpec,
    inventory: &PhoneInventory,
    seconds: f64,
) -> (Vec<(usize, f64)>, Vec<f64>) {
    let sil = inventory.silence_id();
    let vowels = inventory.vowels();
    let consonants = inventory.consonants();
    let scale: Vec<f64> = [0.0, 2.0, 4.0, 7.0, 9.0, 12.0]
        .iter()
        .map(|k| spec.f0_min * (k / 12.0f64).exp2())
        .filter(|&f| spec.contains_note(f))
        .collect();
    let mut phones = vec![(sil, rng.random_range(0.2..0.4))];
    let mut notes = vec![0.0];
    let mut elapsed = phones[0].1;
    while elapsed < seconds {
        for _ in 0..rng.random_range(3..7) {
            if !consonants.is_empty() && rng.random_bool(0.6) {
                let d = rng.random_range(0.06..0.14);
                phones.push((consonants[rng.random_range(0..consonants.len())], d));
                notes.push(0.0);
                elapsed += d;
            }
            if !vowels.is_empty() {
                let d = rng.random_range(0.2..0.8);
                phones.push((vowels[rng.random_range(0..vowels.len())], d));
                notes.push(scale[rng.random_range(0..scale.len())]);
                elapsed += d;
            }
        }
        let rest = rng.random_range(0.15..0.4);
        phones.push((sil, rest));
        notes.push(0.0);
        elapsed += rest;
    }
    (phones, notes)
}

fn build_singers(
    singer_ids: impl Iterator<Item = u32>,
    songs_per_singer: usize,
    validation_songs: usize,
    song_seconds: f64,
    seed: u64,
    inventory: &PhoneInventory,
    extractor: &MelExtractor,
) -> Result<Corpus, CorpusError> {
    if validation_songs >= songs_per_singer {
        return Err(CorpusError::InvalidLayout(format!(
            "{validation_songs} validation songs out of {songs_per_singer} leaves no training data"
        )));
    }
    let mut corpus = Corpus { singers: Vec::new(), train: Vec::new(), validation: Vec::new() };
    for id in singer_ids {
        let mut spec = generate_singer(mix_seed(seed, mix_seed(domain::SINGER, id as u64)), inventory);
        spec.singer_id = id;
        for song in 0..songs_per_singer {
            let song_seed = mix_seed(mix_seed(seed, domain::SONG), ((id as u64) << 32) | song as u64);
            let mut rng = stream(song_seed, domain::SONG, 0);
            let (phones, notes) = compose_song(&mut rng, &spec, inventory, song_seconds);
            let utt = synthesize_utterance(&spec, inventory, &phones, &notes, song_seed, extractor)?;
            if song >= songs_per_singer - validation_songs {
                corpus.validation.push(utt);
            } else {
                corpus.train.push(utt);
            }
        }
        corpus.singers.push(spec);
    }
    Ok(corpus)
}

/// `n_singers` synthetic singers with singer ids `0..n_singers`; the last
/// `validation_songs` songs of every singer form the validation split.
pub fn build_corpus(
    n_singers: usize,
    songs_per_singer: usize,
    validation_songs: usize,
    song_seconds: f64,
    seed: u64,
    inventory: &PhoneInventory,
    extractor: &MelExtractor,
) -> Result<Corpus, CorpusError> {
    if n_singers == 0 {
        return Err(CorpusError::InvalidLayout("need at least one singer".into()));
    }
    build_singers(0..n_singers as u32, songs_per_singer, validation_songs, song_seconds, seed, inventory, extractor)
}

/// Multi-singer set, held-out target singer (id `n_singers`) and the
/// cloning subset: the shortest prefix of the target training songs whose
/// duration reaches `clone_seconds`.
pub fn build_protocol(cfg: &CorpusConfig, seed: u64, extractor: &MelExtractor) -> Result<ProtocolCorpora, CorpusError> {
    let inventory = PhoneInventory::with_size(cfg.inventory_size)?;
    let multi = build_corpus(
        cfg.n_singers,
        cfg.songs_per_singer,
        cfg.validation_songs,
        cfg.song_seconds,
        seed,
        &inventory,
        extractor,
    )?;
    let target_id = cfg.n_singers as u32;
    let target = build_singers(
        std::iter::once(target_id),
        cfg.target_songs,
        cfg.target_validation_songs,
        cfg.song_seconds,
        seed,
        &inventory,
        extractor,
    )?;
    let mut cloning = Vec::new();
    for utt in &target.train {
        if total_duration(&cloning) >= cfg.clone_seconds {
            break;
        }
        cloning.push(utt.clone());
    }
    Ok(ProtocolCorpora { inventory, multi, target, cloning })
}
