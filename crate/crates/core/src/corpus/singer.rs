use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::phones::{PhoneInventory, PhoneKind};

/// Centre frequency and bandwidth of one resonance, in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub freq: f64,
    pub bandwidth: f64,
}

/// Voice of one synthetic singer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingerSpec {
    pub singer_id: u32,
    /// Three ascending formants for every phone id; empty for non-vowels.
    pub vowel_formants: Vec<Vec<Resonance>>,
    /// Noise-shaping resonance for every phone id; `None` for non-consonants.
    pub consonant_bands: Vec<Option<Resonance>>,
    pub f0_min: f64,
    pub f0_max: f64,
    pub vibrato_rate_hz: f64,
    /// Peak deviation of the vibrato.
    pub vibrato_depth_cents: f64,
    /// One-pole coefficient of the glottal source low-pass.
    pub source_tilt: f64,
}

impl SingerSpec {
    pub fn contains_note(&self, hz: f64) -> bool {
        hz >= self.f0_min && hz <= self.f0_max
    }
}

const VOWEL_CHART: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [530.0, 1840.0, 2480.0],
    [270.0, 2290.0, 3010.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];
const VOWEL_BANDWIDTHS: [f64; 3] = [80.0, 100.0, 140.0];
const CONSONANT_CHART: [(f64, f64); 5] = [(6500.0, 2500.0), (3200.0, 1200.0), (5000.0, 6000.0), (7500.0, 3000.0), (1500.0, 2000.0)];

fn canonical_vowel(index: usize) -> [f64; 3] {
    let slot = index % VOWEL_CHART.len();
    let generation = index / VOWEL_CHART.len();
    if generation == 0 {
        return VOWEL_CHART[slot];
    }
    let w = 0.5 / generation as f64;
    let (a, b) = (VOWEL_CHART[slot], VOWEL_CHART[(slot + 1) % VOWEL_CHART.len()]);
    [0, 1, 2].map(|i| (1.0 - w) * a[i] + w * b[i])
}

fn canonical_consonant(index: usize) -> (f64, f64) {
    let (f, bw) = CONSONANT_CHART[index % CONSONANT_CHART.len()];
    let generation = index / CONSONANT_CHART.len();
    ((f * (1.0 + 0.15 * generation as f64)).min(13_000.0), bw)
}

/// Draws a singer deterministically from `seed`: a vocal-tract scale and
/// per-formant jitter around the canonical charts, a one-octave F0 range and
/// vibrato parameters.
pub fn generate_singer(seed: u64, inventory: &PhoneInventory) -> SingerSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5117_6e72);
    let tract_scale = rng.random_range(0.88..1.12);
    let f0_min = rng.random_range(110.0..180.0);
    let f0_max = f0_min * 2.0;
    let vibrato_rate_hz = rng.random_range(4.5..6.5);
    let vibrato_depth_cents = rng.random_range(10.0..30.0);
    let source_tilt = rng.random_range(0.85..0.95);

    let mut vowel_formants = Vec::with_capacity(inventory.len());
    let mut consonant_bands = Vec::with_capacity(inventory.len());
    for id in 0..inventory.len() {
        match inventory.kind(id) {
            PhoneKind::Vowel(v) => {
                let chart = canonical_vowel(v);
                let mut formants: Vec<Resonance> = (0..3)
                    .map(|i| Resonance {
                        freq: chart[i] * tract_scale * rng.random_range(0.96..1.04),
                        bandwidth: VOWEL_BANDWIDTHS[i] * rng.random_range(0.85..1.15),
                    })
                    .collect();
                for i in 1..3 {
                    if formants[i].freq < formants[i - 1].freq + 50.0 {
                        formants[i].freq = formants[i - 1].freq + 50.0;
                    }
                }
                vowel_formants.push(formants);
                consonant_bands.push(None);
            }
            PhoneKind::Consonant(c) => {
                let (f, bw) = canonical_consonant(c);
                vowel_formants.push(Vec::new());
                consonant_bands.push(Some(Resonance {
                    freq: f * tract_scale * rng.random_range(0.95..1.05),
                    bandwidth: bw * rng.random_range(0.9..1.1),
                }));
            }
            PhoneKind::Silence => {
                vowel_formants.push(Vec::new());
                consonant_bands.push(None);
            }
        }
    }
    SingerSpec {
        singer_id: seed as u32,
        vowel_formants,
        consonant_bands,
        f0_min,
        f0_max,
        vibrato_rate_hz,
        vibrato_depth_cents,
        source_tilt,
    }
}
