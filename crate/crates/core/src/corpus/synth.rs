//! Source-filter rendering of a timed phone sequence for one singer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::phones::{PhoneInventory, PhoneKind};
use super::singer::{Resonance, SingerSpec};
use super::{CorpusError, LinguisticFrames, Utterance};
use crate::dsp::resample::{kernel, ZERO_CROSSINGS};
use crate::dsp::{AudioClip, F0Track, MelExtractor};

const VOWEL_RMS: f32 = 0.1;
const CONSONANT_RMS: f32 = 0.03;
const FADE_SECONDS: f64 = 0.003;

/// Two-pole resonator with unity gain at DC.
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(r: Resonance, sample_rate: f64) -> Self {
        let t = 1.0 / sample_rate;
        let c = -(-2.0 * std::f64::consts::PI * r.bandwidth * t).exp();
        let b = 2.0 * (-std::f64::consts::PI * r.bandwidth * t).exp() * (2.0 * std::f64::consts::PI * r.freq * t).cos();
        Resonator { a: 1.0 - b - c, b, c, y1: 0.0, y2: 0.0 }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Instantaneous F0 of a held note with sinusoidal vibrato.
fn vibrato_f0(spec: &SingerSpec, note_hz: f64, t: f64, phase0: f64) -> f64 {
    let dev = spec.vibrato_depth_cents / 1200.0 * (2.0 * std::f64::consts::PI * spec.vibrato_rate_hz * t + phase0).sin();
    note_hz * dev.exp2()
}

fn normalize_rms(buf: &mut [f32], target: f32) {
    let rms = (buf.iter().map(|v| v * v).sum::<f32>() / buf.len().max(1) as f32).sqrt();
    if rms > 0.0 {
        let g = target / rms;
        buf.iter_mut().for_each(|v| *v *= g);
    }
}

fn apply_fades(buf: &mut [f32], fade: usize) {
    let n = buf.len();
    let fade = fade.min(n / 2);
    for i in 0..fade {
        let g = (i as f32 + 0.5) / fade as f32;
        buf[i] *= g;
        buf[n - 1 - i] *= g;
    }
}

fn render_vowel(
    spec: &SingerSpec,
    formants: &[Resonance],
    note_hz: f64,
    start_sample: usize,
    len: usize,
    sample_rate: f64,
    phase0: f64,
) -> Vec<f32> {
    // Band-limited pulse train: one windowed-sinc impulse per glottal cycle,
    // placed at the fractional instant where the integrated F0 crosses an
    // integer.
    let margin = ZERO_CROSSINGS + 1;
    let mut source = vec![0.0f64; len + 2 * margin];
    let mut cycles = 0.0f64;
    for n in 0..len {
        let t = (start_sample + n) as f64 / sample_rate;
        let step = vibrato_f0(spec, note_hz, t, phase0) / sample_rate;
        let next = cycles + step;
        if next.floor() > cycles.floor() || n == 0 {
            let frac = if n == 0 { 0.0 } else { (next.floor() - cycles) / step };
            let pos = n as f64 + frac + margin as f64;
            let lo = (pos - ZERO_CROSSINGS as f64).ceil().max(0.0) as usize;
            let hi = ((pos + ZERO_CROSSINGS as f64).floor() as usize).min(source.len() - 1);
            for (j, s) in source.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *s += kernel(pos - j as f64) as f64;
            }
        }
        cycles = next;
    }
    let mut tilt_state = 0.0;
    let mut filters: Vec<Resonator> = formants.iter().map(|&r| Resonator::new(r, sample_rate)).collect();
    let mut out = Vec::with_capacity(len);
    for (i, &s) in source.iter().enumerate() {
        tilt_state = s + spec.source_tilt * tilt_state;
        let mut y = tilt_state;
        for f in filters.iter_mut() {
            y = f.process(y);
        }
        if i >= margin && out.len() < len {
            out.push(y as f32);
        }
    }
    out
}

fn render_consonant(band: Resonance, len: usize, sample_rate: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mut r1 = Resonator::new(band, sample_rate);
    let mut r2 = Resonator::new(band, sample_rate);
    (0..len)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            r2.process(r1.process(x)) as f32
        })
        .collect()
}

/// Renders `phones` (phone id, seconds) with one note in Hz per phone (used
/// only by vowels) and returns audio together with frame-accurate labels,
/// ground-truth F0 and the log-mel analysis.
pub fn synthesize_utterance(
    spec: &SingerSpec,
    inventory: &PhoneInventory,
    phones: &[(usize, f64)],
    notes: &[f64],
    seed: u64,
    extractor: &MelExtractor,
) -> Result<Utterance, CorpusError> {
    if phones.len() != notes.len() {
        return Err(CorpusError::InvalidScore(format!("{} phones but {} notes", phones.len(), notes.len())));
    }
    if phones.is_empty() {
        return Err(CorpusError::InvalidScore("empty phone sequence".into()));
    }
    for (i, (&(id, dur), &note)) in phones.iter().zip(notes).enumerate() {
        if id >= inventory.len() {
            return Err(CorpusError::InvalidScore(format!("phone id {id} out of range")));
        }
        if !(dur > 0.0) {
            return Err(CorpusError::InvalidScore(format!("phone {i} has non-positive duration {dur}")));
        }
        if matches!(inventory.kind(id), PhoneKind::Vowel(_)) && !spec.contains_note(note) {
            return Err(CorpusError::NoteOutOfRange { note_hz: note, min: spec.f0_min, max: spec.f0_max });
        }
    }

    let cfg = extractor.config();
    let sr = cfg.sample_rate as f64;
    let hop = cfg.hop_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase0 = (seed % 6283) as f64 / 1000.0;

    let mut bounds = Vec::with_capacity(phones.len() + 1);
    let mut t = 0.0;
    bounds.push(0.0);
    for &(_, dur) in phones {
        t += dur;
        bounds.push(t);
    }
    let total = (t * sr).round() as usize;
    let mut audio = vec![0.0f32; total];
    let fade = (FADE_SECONDS * sr).round() as usize;
    for (i, &(id, _)) in phones.iter().enumerate() {
        let s0 = (bounds[i] * sr).round() as usize;
        let s1 = ((bounds[i + 1] * sr).round() as usize).min(total);
        if s1 <= s0 {
            continue;
        }
        let mut seg = match inventory.kind(id) {
            PhoneKind::Silence => continue,
            PhoneKind::Vowel(_) => {
                let mut v = render_vowel(spec, &spec.vowel_formants[id], notes[i], s0, s1 - s0, sr, phase0);
                normalize_rms(&mut v, VOWEL_RMS);
                v
            }
            PhoneKind::Consonant(_) => {
                let band = spec.consonant_bands[id].expect("consonant has a noise band");
                let mut v = render_consonant(band, s1 - s0, sr, &mut rng);
                normalize_rms(&mut v, CONSONANT_RMS);
                v
            }
        };
        apply_fades(&mut seg, fade);
        audio[s0..s1].copy_from_slice(&seg);
    }
    audio.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));

    let n_frames = cfg.n_frames(total);
    let frame_rate = cfg.frame_rate();
    let boundary_frames: Vec<usize> = bounds.iter().map(|b| (b * frame_rate).round() as usize).collect();
    let mut phone_id = Vec::with_capacity(n_frames);
    let mut f0 = Vec::with_capacity(n_frames);
    let mut p = 0;
    for f in 0..n_frames {
        while p + 1 < phones.len() && f >= boundary_frames[p + 1] {
            p += 1;
        }
        let id = phones[p].0;
        phone_id.push(id as u16);
        let hz = match inventory.kind(id) {
            PhoneKind::Vowel(_) => vibrato_f0(spec, notes[p], (f * hop) as f64 / sr, phase0) as f32,
            _ => 0.0,
        };
        f0.push(hz);
    }

    let clip = AudioClip { samples: audio, sample_rate: cfg.sample_rate };
    let mel = extractor.compute(&clip)?;
    debug_assert_eq!(mel.n_frames(), n_frames);
    Ok(Utterance {
        audio: clip,
        mel,
        ling: Some(LinguisticFrames { phone_id }),
        f0: F0Track::from_hz(f0),
        singer_id: spec.singer_id,
    })
}
