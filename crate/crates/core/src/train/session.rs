use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clip_global_norm, corpus_fingerprint, lr_schedule, AdamState, Checkpoint, Phase, TrainConfig, TrainError};
use crate::blocks::init_params;
use crate::corpus::{Segment, SegmentSampler, Utterance};
use crate::dsp::{normalize_f0, semitones_to_factor, AudioClip, F0Stats, FeatureConfig, TransposeAugmenter};
use crate::model::{loss_and_grads, FeatureNorm, LossOptions, ModelConfig, NoiseDraw, SystemParams, TrainingExample};
use crate::rng::{domain, mix_seed, stream};
use crate::tensor::Mat;

/// Frames of extra audio analysed on each side of an augmented segment so
/// that window edge effects stay outside the segment.
const AUGMENT_MARGIN: usize = 5;

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub recon: f64,
    pub enc: f64,
    pub grad_norm: f64,
    pub wall_time: f64,
}

/// Model-ready tensors of one utterance.
struct Prepared {
    mel: Mat<f32>,
    phones: Option<Mat<f32>>,
    f0: Mat<f32>,
    speaker: usize,
}

/// Owns a checkpoint and advances it one batch at a time. Batch `s` and its
/// noise are pure functions of `(seed, phase, s)`, so a run resumed from a
/// saved checkpoint continues exactly as the uninterrupted one would.
pub struct Trainer<'a> {
    ckpt: Checkpoint,
    utts: &'a [Utterance],
    data: Vec<Prepared>,
    sampler: SegmentSampler,
    augmenter: Option<TransposeAugmenter>,
    trainable: Vec<bool>,
    frozen_names: Vec<String>,
    options: LossOptions,
    fixed_k: Option<f32>,
    seed: u64,
    started: Instant,
}

fn phase_index(p: Phase) -> u64 {
    match p {
        Phase::Supervised => 0,
        Phase::Adapt => 1,
    }
}

impl<'a> Trainer<'a> {
    pub fn new(ckpt: Checkpoint, utts: &'a [Utterance]) -> Result<Self, TrainError> {
        let cfg = &ckpt.model;
        cfg.validate()?;
        ckpt.train.validate()?;
        if !ckpt.params.matches(cfg) {
            return Err(TrainError::Incompatible("parameters do not match the model configuration".into()));
        }
        let adapt = ckpt.phase == Phase::Adapt;
        let has_ea = ckpt.params.ea.is_some();
        if adapt && !has_ea {
            return Err(TrainError::Model(crate::model::ModelError::NoAcousticEncoder));
        }
        let mut data = Vec::with_capacity(utts.len());
        for u in utts {
            if u.mel.n_bands() != cfg.n_bands {
                return Err(TrainError::Incompatible(format!("corpus has {} bands, model {}", u.mel.n_bands(), cfg.n_bands)));
            }
            let speaker = ckpt
                .speaker_row(u.singer_id)
                .ok_or_else(|| TrainError::Incompatible(format!("singer {} has no speaker row", u.singer_id)))?;
            // Decoder adaptation must work from audio alone: labels are never read.
            let phones = if adapt {
                None
            } else {
                let ling = u.labels()?;
                if let Some(&bad) = ling.phone_id.iter().find(|&&p| p as usize >= cfg.n_phones) {
                    return Err(TrainError::Incompatible(format!("phone id {bad} outside inventory of {}", cfg.n_phones)));
                }
                Some(ling.one_hot(cfg.n_phones))
            };
            data.push(Prepared {
                mel: ckpt.norm.normalize(&u.mel.values),
                phones,
                f0: normalize_f0(&u.f0, &ckpt.norm.f0)?,
                speaker,
            });
        }
        let seed = mix_seed(ckpt.train.seed, phase_index(ckpt.phase));
        let sampler = SegmentSampler::new(
            utts,
            ckpt.train.batch_size,
            ckpt.train.valid_frames,
            cfg.segment_context(),
            seed,
        )?;
        let augmenter = (!adapt && has_ea && ckpt.train.augment.enabled && ckpt.train.augment.max_semitones > 0.0)
            .then(|| TransposeAugmenter::new(&ckpt.features))
            .transpose()?;
        let names = ckpt.params.names();
        let frozen = |n: &str| adapt && (n.starts_with("ea/") || n.starts_with("el/"));
        let trainable = names.iter().map(|n| !frozen(n)).collect();
        let frozen_names = names.iter().filter(|n| frozen(n)).cloned().collect();
        let options = if adapt { LossOptions { train_encoders: false, ..ckpt.train.loss } } else { ckpt.train.loss };
        let fixed_k = if adapt {
            Some(1.0)
        } else if !has_ea {
            Some(0.0)
        } else {
            None
        };
        Ok(Trainer {
            ckpt,
            utts,
            data,
            sampler,
            augmenter,
            trainable,
            frozen_names,
            options,
            fixed_k,
            seed,
            started: Instant::now(),
        })
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.ckpt
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        self.ckpt
    }

    fn augmented(&self, aug: &TransposeAugmenter, seg: &Segment, factor: f64) -> Result<Mat<f32>, TrainError> {
        let utt = &self.utts[seg.utterance];
        let n = utt.n_frames();
        let a = seg.start.saturating_sub(AUGMENT_MARGIN);
        let b = (seg.end() + AUGMENT_MARGIN).min(n);
        let hop = self.ckpt.features.hop_samples();
        let s1 = ((b - 1) * hop + 1).min(utt.audio.samples.len());
        let clip = AudioClip { samples: utt.audio.samples[a * hop..s1].to_vec(), sample_rate: utt.audio.sample_rate };
        let mel = aug.apply(&clip, b - a, factor)?;
        let off = seg.start - a;
        Ok(self.ckpt.norm.normalize(&mel.values.slice_rows(off, off + seg.len())))
    }

    /// Runs one optimiser update.
    pub fn step(&mut self) -> Result<StepRecord, TrainError> {
        let step = self.ckpt.step;
        let batch = self.sampler.batch(step);
        let mut rng = stream(self.seed, domain::STEP_NOISE, step);
        let mut grads = self.ckpt.params.zeros_like();
        let scale = 1.0 / batch.len() as f32;
        let (mut loss, mut recon, mut enc) = (0.0, 0.0, 0.0);
        let cfg = &self.ckpt.model;
        for seg in &batch {
            let p = &self.data[seg.utterance];
            let (a, b) = (seg.start, seg.end());
            let target = p.mel.slice_rows(a, b);
            let acoustic = match &self.augmenter {
                Some(aug) => {
                    let s = self.ckpt.train.augment.max_semitones;
                    let factor = semitones_to_factor(rng.random_range(-s..=s));
                    Some(self.augmented(aug, seg, factor)?)
                }
                None => None,
            };
            let phones = p.phones.as_ref().map(|m| m.slice_rows(a, b));
            let f0 = p.f0.slice_rows(a, b);
            let draw = NoiseDraw::<f32>::sample(&self.ckpt.train.noise, seg.len(), cfg, &mut rng);
            let draw = match self.fixed_k {
                Some(k) => draw.with_k(k),
                None => draw,
            };
            let ex = TrainingExample {
                acoustic: Some(acoustic.as_ref().unwrap_or(&target)),
                target: &target,
                phones: phones.as_ref(),
                f0: &f0,
                speaker: p.speaker,
                valid: seg.valid_range(),
            };
            let t = loss_and_grads(&self.ckpt.params, cfg, &ex, &draw, &self.options, scale, &mut grads)?;
            loss += t.total / batch.len() as f64;
            recon += t.recon / batch.len() as f64;
            enc += t.enc / batch.len() as f64;
        }
        for (name, g) in self.ckpt.params.names().iter().zip(grads.tensors()) {
            if self.frozen_names.contains(name) && g.data.iter().any(|&v| v != 0.0) {
                return Err(TrainError::FrozenGradient(name.clone()));
            }
        }
        let grad_norm = clip_global_norm(grads.tensors_mut(), self.ckpt.train.clip_norm);
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(TrainError::Diverged { step, checkpoint: Box::new(self.ckpt.clone()) });
        }
        let lr = lr_schedule(step + 1, &self.ckpt.train);
        let adam = self.ckpt.train.adam;
        self.ckpt.optimizer.update(&adam, self.ckpt.params.tensors_mut(), grads.tensors(), lr, &self.trainable);
        self.ckpt.step += 1;
        Ok(StepRecord {
            step: self.ckpt.step,
            lr,
            loss,
            recon,
            enc,
            grad_norm,
            wall_time: self.started.elapsed().as_secs_f64(),
        })
    }

    /// Trains until `until` updates are complete, writing one JSON line per
    /// update to `log`.
    pub fn run(&mut self, until: u64, mut log: Option<&mut dyn Write>) -> Result<Vec<StepRecord>, TrainError> {
        let mut records = Vec::new();
        while self.ckpt.step < until {
            let r = self.step()?;
            if let Some(w) = log.as_mut() {
                serde_json::to_writer(&mut *w, &r).map_err(std::io::Error::from)?;
                w.write_all(b"\n")?;
            }
            log::debug!("step {} loss {:.5} recon {:.5} enc {:.5}", r.step, r.loss, r.recon, r.enc);
            records.push(r);
        }
        Ok(records)
    }
}

fn singer_ids(utts: &[Utterance]) -> Vec<u32> {
    utts.iter().map(|u| u.singer_id).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Fresh checkpoint for joint training on labelled data: normalisation is
/// measured on `utts` and each singer gets a speaker row.
pub fn initial_checkpoint(
    utts: &[Utterance],
    model: &ModelConfig,
    train: &TrainConfig,
    features: &FeatureConfig,
) -> Result<Checkpoint, TrainError> {
    let f0 = F0Stats::from_tracks(utts.iter().map(|u| &u.f0)).ok_or(TrainError::EmptyCorpus)?;
    let norm = FeatureNorm::from_mels(utts.iter().map(|u| &u.mel), f0).ok_or(TrainError::EmptyCorpus)?;
    let speakers = singer_ids(utts);
    let model = ModelConfig { n_speakers: speakers.len(), ..model.clone() };
    let params = SystemParams::init(&model, train.seed)?;
    Ok(Checkpoint {
        optimizer: AdamState::zeros(&params.tensors()),
        model,
        train: train.clone(),
        features: features.clone(),
        phase: Phase::Supervised,
        step: 0,
        params,
        norm,
        speakers,
        corpus_fingerprint: corpus_fingerprint(utts),
    })
}

/// Joint training of both encoders and the decoder on labelled audio
/// (without an acoustic encoder when `model.acoustic_encoder` is false).
pub fn train_supervised(
    utts: &[Utterance],
    model: &ModelConfig,
    train: &TrainConfig,
    features: &FeatureConfig,
    log: Option<&mut dyn Write>,
) -> Result<Checkpoint, TrainError> {
    let ckpt = initial_checkpoint(utts, model, train, features)?;
    let mut t = Trainer::new(ckpt, utts)?;
    t.run(train.max_steps, log)?;
    Ok(t.into_checkpoint())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AdaptOptions {
    pub steps: u64,
    /// Re-initialise the decoder instead of starting from the base weights.
    pub from_scratch: bool,
}

/// Starts a new phase on `base`: fresh optimiser moments, step counter at
/// zero, and a new speaker row for every singer in `utts` the base has not
/// seen.
fn fork(base: &Checkpoint, utts: &[Utterance], train: &TrainConfig, phase: Phase) -> Checkpoint {
    let mut ck = base.clone();
    ck.phase = phase;
    ck.step = 0;
    ck.train = train.clone();
    for s in singer_ids(utts) {
        if ck.speaker_row(s).is_none() {
            ck.params.add_speaker(mix_seed(train.seed, s as u64));
            ck.speakers.push(s);
        }
    }
    ck.model.n_speakers = ck.speakers.len();
    ck.optimizer = AdamState::zeros(&ck.params.tensors());
    ck.corpus_fingerprint = corpus_fingerprint(utts);
    ck
}

/// Trains `D1`, `D2` and the new speaker row from audio alone, behind the
/// frozen acoustic encoder (`k = 1`, reconstruction loss only).
pub fn adapt_decoder(
    base: &Checkpoint,
    utts: &[Utterance],
    train: &TrainConfig,
    options: AdaptOptions,
    log: Option<&mut dyn Write>,
) -> Result<Checkpoint, TrainError> {
    let audio_only: Vec<Utterance> = utts.iter().map(Utterance::without_labels).collect();
    let mut ck = fork(base, &audio_only, train, Phase::Adapt);
    if options.from_scratch {
        ck.params.d1 = init_params(&ck.model.d1_block(), mix_seed(train.seed, 2));
        ck.params.d2 = init_params(&ck.model.d2_block(), mix_seed(train.seed, 3));
    }
    let mut t = Trainer::new(ck, &audio_only)?;
    t.run(options.steps, log)?;
    Ok(t.into_checkpoint())
}

/// Fine-tunes on a few minutes of target data for `train.clone_steps`
/// updates: from audio alone as in [`adapt_decoder`], or with labels and the
/// joint loss when `supervised`.
pub fn clone_voice(
    base: &Checkpoint,
    utts: &[Utterance],
    train: &TrainConfig,
    supervised: bool,
    log: Option<&mut dyn Write>,
) -> Result<Checkpoint, TrainError> {
    if !supervised {
        return adapt_decoder(base, utts, train, AdaptOptions { steps: train.clone_steps, from_scratch: false }, log);
    }
    let ck = fork(base, utts, train, Phase::Supervised);
    let mut t = Trainer::new(ck, utts)?;
    t.run(train.clone_steps, log)?;
    Ok(t.into_checkpoint())
}
