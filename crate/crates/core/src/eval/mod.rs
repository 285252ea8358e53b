//! Objective evaluation: reconstruction errors, embedding diagnostics, the
//! experiment matrix, mel containers and heatmap plots.

mod infer;
mod io;
mod matrix;
mod plot;
mod probe;

pub use infer::{checkpoint_inventory, convert, synthesize};
pub use io::{load_mel, save_mel};
pub use matrix::{run_experiment_matrix, MatrixOutcome, MatrixPlan, SYSTEMS};
pub use plot::{plot_mel, render_heatmap, PlotOptions};
pub use probe::LinearProbe;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::ContainerError;
use crate::corpus::{CorpusError, Utterance};
use crate::dsp::{normalize_f0, semitones_to_factor, DspError, TransposeAugmenter};
use crate::model::{
    control_track, decode_autoregressive, decode_teacher_forced, encode_acoustic, encode_linguistic, ModelError,
    NoiseDraw,
};
use crate::tensor::Mat;
use crate::train::{Checkpoint, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("singer {0} has no speaker row in the checkpoint")]
    UnknownSpeaker(u32),
    #[error("phone timing ends at {phones:.3} s but the F0 curve at {f0:.3} s")]
    DurationMismatch { phones: f64, f0: f64 },
    #[error("missing corpus component: {0}")]
    MissingComponent(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub probe_iterations: usize,
    /// Every n-th frame of the probe training set is used.
    pub probe_stride: usize,
    /// Transposition used for the invariance ratio (both directions).
    pub invariance_semitones: f64,
    /// Also decode autoregressively (the slow part).
    pub autoregressive: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { probe_iterations: 300, probe_stride: 2, invariance_semitones: 2.0, autoregressive: true }
    }
}

/// Objective metrics of one system on a validation set. Errors are mean
/// squared differences in raw log-mel units over all frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub system: String,
    pub n_utterances: usize,
    pub n_frames: usize,
    pub teacher_forced_error: Option<f64>,
    /// Synthesis from phones.
    pub autoregressive_error: Option<f64>,
    /// Resynthesis from the acoustic encoder (identity voice conversion).
    pub conversion_error: Option<f64>,
    /// Mean per-frame L2 distance between acoustic and linguistic embeddings.
    pub embedding_distance: Option<f64>,
    pub probe_acoustic: Option<f64>,
    pub probe_acoustic_train: Option<f64>,
    pub probe_linguistic: Option<f64>,
    pub probe_linguistic_train: Option<f64>,
    /// Embedding shift under transposition over mean distance between
    /// phone centroids.
    pub invariance_ratio: Option<f64>,
}

impl MetricReport {
    pub fn empty(system: &str) -> Self {
        MetricReport {
            system: system.into(),
            n_utterances: 0,
            n_frames: 0,
            teacher_forced_error: None,
            autoregressive_error: None,
            conversion_error: None,
            embedding_distance: None,
            probe_acoustic: None,
            probe_acoustic_train: None,
            probe_linguistic: None,
            probe_linguistic_train: None,
            invariance_ratio: None,
        }
    }
}

fn sq_error(a: &Mat<f32>, b: &Mat<f32>) -> f64 {
    a.data.iter().zip(&b.data).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum()
}

fn row_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt()
}

/// Embeddings of one utterance.
struct Encoded {
    acoustic: Option<Mat<f32>>,
    linguistic: Mat<f32>,
    phones: Vec<usize>,
}

fn encode(ckpt: &Checkpoint, u: &Utterance) -> Result<Encoded, EvalError> {
    let cfg = &ckpt.model;
    let ling = u.labels()?;
    let linguistic = encode_linguistic(&ckpt.params, cfg, &ling.one_hot(cfg.n_phones))?.values;
    let acoustic = match ckpt.params.ea {
        Some(_) => Some(encode_acoustic(&ckpt.params, cfg, &ckpt.norm.normalize(&u.mel.values))?.values),
        None => None,
    };
    Ok(Encoded { acoustic, linguistic, phones: ling.phone_id.iter().map(|&p| p as usize).collect() })
}

fn stack(rows: &[&Mat<f32>], stride: usize) -> Mat<f32> {
    let cols = rows.first().map_or(0, |m| m.cols);
    let mut data = Vec::new();
    for m in rows {
        for t in (0..m.rows).step_by(stride) {
            data.extend_from_slice(m.row(t));
        }
    }
    Mat::from_vec(data.len() / cols.max(1), cols, data)
}

fn strided<T: Copy>(v: &[Vec<T>], stride: usize) -> Vec<T> {
    v.iter().flat_map(|x| x.iter().step_by(stride).copied()).collect()
}

/// Fits a probe on `train` embeddings and scores it on both splits.
fn probe_scores(
    train: &[&Mat<f32>],
    train_labels: &[Vec<usize>],
    val: &[&Mat<f32>],
    val_labels: &[Vec<usize>],
    n_classes: usize,
    options: &EvalOptions,
) -> (f64, f64) {
    let stride = options.probe_stride.max(1);
    let x = stack(train, stride);
    let y = strided(train_labels, stride);
    let probe = LinearProbe::fit(&x, &y, n_classes, options.probe_iterations);
    let xv = stack(val, 1);
    let yv = strided(val_labels, 1);
    (probe.accuracy(&xv, &yv), probe.accuracy(&x, &y))
}

/// Mean pairwise distance between per-phone centroids of `emb`.
fn centroid_spread(emb: &[&Mat<f32>], labels: &[Vec<usize>], n_classes: usize) -> f64 {
    let dim = emb.first().map_or(0, |m| m.cols);
    let mut sums = vec![vec![0.0f64; dim]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (m, ls) in emb.iter().zip(labels) {
        for (t, &p) in ls.iter().enumerate() {
            counts[p] += 1;
            for (s, &v) in sums[p].iter_mut().zip(m.row(t)) {
                *s += v as f64;
            }
        }
    }
    let centroids: Vec<Vec<f32>> = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &n)| n > 0)
        .map(|(s, &n)| s.iter().map(|v| (v / n as f64) as f32).collect())
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            total += row_distance(&centroids[i], &centroids[j]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// Scores `ckpt` on labelled `validation` utterances with all training
/// noise disabled. The phone probes are fitted on `probe_train` (typically
/// the training split) and evaluated on `validation`.
pub fn evaluate(
    ckpt: &Checkpoint,
    system: &str,
    validation: &[Utterance],
    probe_train: &[Utterance],
    options: &EvalOptions,
) -> Result<MetricReport, EvalError> {
    if validation.is_empty() {
        return Err(EvalError::EmptyValidation);
    }
    let cfg = &ckpt.model;
    let mut report = MetricReport::empty(system);
    let has_ea = ckpt.params.ea.is_some();
    let (mut tf, mut ar, mut vc, mut dist) = (0.0, 0.0, 0.0, 0.0);
    let mut encoded = Vec::with_capacity(validation.len());
    for u in validation {
        let row = ckpt.speaker_row(u.singer_id).ok_or(EvalError::UnknownSpeaker(u.singer_id))?;
        let enc = encode(ckpt, u)?;
        let n = u.n_frames();
        let target = ckpt.norm.normalize(&u.mel.values);
        let c = control_track(&normalize_f0(&u.f0, &ckpt.norm.f0)?, ckpt.params.speaker_row(row)?)?;
        let el = crate::model::EmbeddingSequence { values: enc.linguistic.clone() };
        let silent = NoiseDraw::silent(n, cfg, 0.0);
        let pred = decode_teacher_forced(&ckpt.params, cfg, &el, &c, &target, &silent)?;
        tf += sq_error(&ckpt.norm.denormalize(&pred), &u.mel.values);
        if options.autoregressive {
            let pred = decode_autoregressive(&ckpt.params, cfg, &el, &c, None)?;
            ar += sq_error(&ckpt.norm.denormalize(&pred), &u.mel.values);
        }
        if let Some(ea) = &enc.acoustic {
            if options.autoregressive {
                let e = crate::model::EmbeddingSequence { values: ea.clone() };
                let pred = decode_autoregressive(&ckpt.params, cfg, &e, &c, None)?;
                vc += sq_error(&ckpt.norm.denormalize(&pred), &u.mel.values);
            }
            dist += (0..n).map(|t| row_distance(ea.row(t), enc.linguistic.row(t))).sum::<f64>();
        }
        report.n_frames += n;
        encoded.push(enc);
    }
    report.n_utterances = validation.len();
    let frames = report.n_frames as f64;
    let cells = frames * cfg.n_bands as f64;
    report.teacher_forced_error = Some(tf / cells);
    if options.autoregressive {
        report.autoregressive_error = Some(ar / cells);
        report.conversion_error = has_ea.then_some(vc / cells);
    }
    report.embedding_distance = has_ea.then_some(dist / frames);

    let val_labels: Vec<Vec<usize>> = encoded.iter().map(|e| e.phones.clone()).collect();
    if !probe_train.is_empty() {
        let train_enc = probe_train.iter().map(|u| encode(ckpt, u)).collect::<Result<Vec<_>, _>>()?;
        let train_labels: Vec<Vec<usize>> = train_enc.iter().map(|e| e.phones.clone()).collect();
        let tl: Vec<&Mat<f32>> = train_enc.iter().map(|e| &e.linguistic).collect();
        let vl: Vec<&Mat<f32>> = encoded.iter().map(|e| &e.linguistic).collect();
        let (v, t) = probe_scores(&tl, &train_labels, &vl, &val_labels, cfg.n_phones, options);
        report.probe_linguistic = Some(v);
        report.probe_linguistic_train = Some(t);
        if has_ea {
            let ta: Vec<&Mat<f32>> = train_enc.iter().filter_map(|e| e.acoustic.as_ref()).collect();
            let va: Vec<&Mat<f32>> = encoded.iter().filter_map(|e| e.acoustic.as_ref()).collect();
            let (v, t) = probe_scores(&ta, &train_labels, &va, &val_labels, cfg.n_phones, options);
            report.probe_acoustic = Some(v);
            report.probe_acoustic_train = Some(t);
        }
    }

    if has_ea {
        let aug = TransposeAugmenter::new(&ckpt.features)?;
        let mut shift = 0.0;
        let mut count = 0usize;
        for (u, enc) in validation.iter().zip(&encoded) {
            let base = enc.acoustic.as_ref().expect("acoustic embeddings exist");
            for s in [-options.invariance_semitones, options.invariance_semitones] {
                let mel = aug.apply(&u.audio, u.n_frames(), semitones_to_factor(s))?;
                let moved = encode_acoustic(&ckpt.params, cfg, &ckpt.norm.normalize(&mel.values))?.values;
                shift += (0..base.rows).map(|t| row_distance(base.row(t), moved.row(t))).sum::<f64>();
                count += base.rows;
            }
        }
        let va: Vec<&Mat<f32>> = encoded.iter().filter_map(|e| e.acoustic.as_ref()).collect();
        let spread = centroid_spread(&va, &val_labels, cfg.n_phones);
        report.invariance_ratio = Some(if spread > 0.0 { shift / count as f64 / spread } else { f64::INFINITY });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_spread_of_two_points() {
        let m = Mat::from_vec(3, 2, vec![0.0, 0.0, 3.0, 4.0, 3.0, 4.0]);
        let labels = vec![vec![0, 1, 1]];
        assert!((centroid_spread(&[&m], &labels, 3) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn strided_stacking() {
        let m = Mat::from_fn(5, 1, |t, _| t as f32);
        assert_eq!(stack(&[&m], 2).data, vec![0.0, 2.0, 4.0]);
        assert_eq!(strided(&[vec![0usize, 1, 2, 3, 4]], 2), vec![0, 2, 4]);
    }
}
