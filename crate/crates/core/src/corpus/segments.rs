use rand::Rng;

use super::{CorpusError, Utterance};
use crate::dsp::AudioClip;
use crate::rng::{domain, stream};

/// Frames of context kept on each side of the valid region so that valid
/// outputs never see padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentContext {
    pub left: usize,
    pub right: usize,
}

/// A training window `[start, start + left + valid + right)` of one utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub utterance: usize,
    pub start: usize,
    pub context: SegmentContext,
    pub valid: usize,
    pub singer_id: u32,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.context.left + self.valid + self.context.right
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn end(&self) -> usize {
        self.start + self.len()
    }

    /// Segment-relative range of loss-contributing frames.
    pub fn valid_range(&self) -> std::ops::Range<usize> {
        self.context.left..self.context.left + self.valid
    }

    pub fn mask(&self) -> Vec<bool> {
        let r = self.valid_range();
        (0..self.len()).map(|t| r.contains(&t)).collect()
    }

    /// Audio spanning the frame centres of the segment.
    pub fn audio(&self, utt: &Utterance, hop: usize) -> AudioClip {
        let s0 = self.start * hop;
        let s1 = ((self.end() - 1) * hop + 1).min(utt.audio.samples.len());
        AudioClip { samples: utt.audio.samples[s0..s1].to_vec(), sample_rate: utt.audio.sample_rate }
    }
}

/// Uniform sampler of fixed-length segments over a dataset. Batch `i` is a
/// pure function of `(seed, i)`.
#[derive(Debug, Clone)]
pub struct SegmentSampler {
    /// (utterance index, number of admissible start frames)
    candidates: Vec<(usize, usize, u32)>,
    total_starts: usize,
    batch_size: usize,
    valid: usize,
    context: SegmentContext,
    seed: u64,
}

impl SegmentSampler {
    pub fn new(
        dataset: &[Utterance],
        batch_size: usize,
        valid: usize,
        context: SegmentContext,
        seed: u64,
    ) -> Result<Self, CorpusError> {
        let needed = context.left + valid + context.right;
        let mut candidates = Vec::new();
        for (i, u) in dataset.iter().enumerate() {
            if u.n_frames() < needed {
                log::warn!("skipping utterance {i}: {} frames < {needed} needed", u.n_frames());
                continue;
            }
            candidates.push((i, u.n_frames() - needed + 1, u.singer_id));
        }
        if candidates.is_empty() {
            return Err(CorpusError::NoUsableUtterance { needed });
        }
        let total_starts = candidates.iter().map(|c| c.1).sum();
        Ok(SegmentSampler { candidates, total_starts, batch_size, valid, context, seed })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn segment_len(&self) -> usize {
        self.context.left + self.valid + self.context.right
    }

    pub fn batch(&self, index: u64) -> Vec<Segment> {
        let mut rng = stream(self.seed, domain::BATCH, index);
        (0..self.batch_size)
            .map(|_| {
                let mut k = rng.random_range(0..self.total_starts);
                let mut pick = self.candidates[0];
                for &c in &self.candidates {
                    if k < c.1 {
                        pick = c;
                        break;
                    }
                    k -= c.1;
                }
                Segment { utterance: pick.0, start: k, context: self.context, valid: self.valid, singer_id: pick.2 }
            })
            .collect()
    }

    /// Endless stream of batches starting at batch `from`.
    pub fn iter_from(&self, from: u64) -> impl Iterator<Item = Vec<Segment>> + '_ {
        (from..).map(move |i| self.batch(i))
    }
}
