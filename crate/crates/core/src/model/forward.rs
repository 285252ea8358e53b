use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::F0_CHANNELS;
use super::{ControlTrack, EmbeddingSequence, ModelConfig, ModelError, SystemParams};
use crate::blocks::{block_backward, block_forward, block_forward_cached};
use crate::tensor::{Mat, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Standard deviation of `ε1`, added to the embedding after the tanh.
    pub sigma1: f64,
    /// Standard deviation of `ε2`, added to the teacher-forced mel history.
    pub sigma2: f64,
    /// Probability that the switch picks the acoustic embedding.
    pub switch_p: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { sigma1: 0.3, sigma2: 0.2, switch_p: 0.5 }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec { sigma1: 0.0, sigma2: 0.0, switch_p: 0.5 }
    }
}

/// One realisation of the stochastic parts of a training pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw<T> {
    /// Switch value, 1 for the acoustic embedding and 0 for the linguistic one.
    pub k: T,
    /// `[frames × embed_dim]`
    pub eps1: Mat<T>,
    /// `[frames × n_bands]`
    pub eps2: Mat<T>,
}

impl<T: Real> NoiseDraw<T> {
    /// Draws `k`, then `ε1` and `ε2` in row-major order.
    pub fn sample(spec: &NoiseSpec, frames: usize, config: &ModelConfig, rng: &mut impl Rng) -> Self {
        let k = if rng.random_bool(spec.switch_p.clamp(0.0, 1.0)) { T::one() } else { T::zero() };
        let mut gauss = |rows: usize, cols: usize, sigma: f64| {
            if sigma == 0.0 {
                return Mat::zeros(rows, cols);
            }
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            Mat::from_fn(rows, cols, |_, _| T::from_f64_lossy(normal.sample(rng)))
        };
        let eps1 = gauss(frames, config.embed_dim(), spec.sigma1);
        let eps2 = gauss(frames, config.n_bands, spec.sigma2);
        NoiseDraw { k, eps1, eps2 }
    }

    /// Noise-free draw with a fixed switch.
    pub fn silent(frames: usize, config: &ModelConfig, k: T) -> Self {
        NoiseDraw { k, eps1: Mat::zeros(frames, config.embed_dim()), eps2: Mat::zeros(frames, config.n_bands) }
    }

    pub fn with_k(mut self, k: T) -> Self {
        self.k = k;
        self
    }
}

/// Inputs of one training segment, all frame-aligned. Mel values are
/// normalised.
#[derive(Debug, Clone)]
pub struct TrainingExample<'a, T> {
    /// Acoustic encoder input; may be a transposed copy of `target`.
    pub acoustic: Option<&'a Mat<T>>,
    /// Reconstruction target `x`.
    pub target: &'a Mat<T>,
    /// One-hot phones `y`.
    pub phones: Option<&'a Mat<T>>,
    /// `[frames × 2]` normalised F0.
    pub f0: &'a Mat<T>,
    pub speaker: usize,
    /// Loss-contributing frames.
    pub valid: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossOptions {
    pub lambda_recon: f64,
    pub lambda_enc: f64,
    /// When false the encoders receive no gradient and `L_enc` is not formed.
    pub train_encoders: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions { lambda_recon: 1.0, lambda_enc: 0.2, train_encoders: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub recon: f64,
    pub enc: f64,
    pub k: f64,
}

fn shape_err<T>(what: &str, got: (usize, usize), want: (usize, usize)) -> Result<T, ModelError> {
    Err(ModelError::Shape(format!("{what} is {got:?}, expected {want:?}")))
}

pub fn encode_acoustic<T: Real>(
    params: &SystemParams<T>,
    config: &ModelConfig,
    mel: &Mat<T>,
) -> Result<EmbeddingSequence<T>, ModelError> {
    let ea = params.ea.as_ref().ok_or(ModelError::NoAcousticEncoder)?;
    if mel.cols != config.n_bands || mel.rows == 0 {
        return shape_err("mel", mel.shape(), (mel.rows.max(1), config.n_bands));
    }
    Ok(EmbeddingSequence { values: block_forward(ea, &config.acoustic_block(), mel, None)? })
}

pub fn encode_linguistic<T: Real>(
    params: &SystemParams<T>,
    config: &ModelConfig,
    phones: &Mat<T>,
) -> Result<EmbeddingSequence<T>, ModelError> {
    if phones.cols != config.n_phones || phones.rows == 0 {
        return shape_err("phones", phones.shape(), (phones.rows.max(1), config.n_phones));
    }
    Ok(EmbeddingSequence { values: block_forward(&params.el, &config.linguistic_block(), phones, None)? })
}

/// `e = k·eA + (1−k)·eL`.
pub fn switch_embedding<T: Real>(
    ea: &EmbeddingSequence<T>,
    el: &EmbeddingSequence<T>,
    k: T,
) -> Result<EmbeddingSequence<T>, ModelError> {
    if ea.values.shape() != el.values.shape() {
        return shape_err("linguistic embedding", el.values.shape(), ea.values.shape());
    }
    let one_minus = T::one() - k;
    let data = ea.values.data.iter().zip(&el.values.data).map(|(&a, &l)| k * a + one_minus * l).collect();
    Ok(EmbeddingSequence { values: Mat::from_vec(ea.values.rows, ea.values.cols, data) })
}

/// `c = [f0 channels, speaker embedding]` on every frame.
pub fn control_track<T: Real>(f0: &Mat<T>, speaker: &[T]) -> Result<ControlTrack<T>, ModelError> {
    if f0.cols != F0_CHANNELS {
        return shape_err("f0", f0.shape(), (f0.rows, F0_CHANNELS));
    }
    let s = Mat::from_fn(f0.rows, speaker.len(), |_, j| speaker[j]);
    Ok(ControlTrack { values: f0.hcat(&s) })
}

/// Teacher-forcing input: the target delayed by one frame, zero first frame.
pub(crate) fn shift_history<T: Real>(x: &Mat<T>) -> Mat<T> {
    let mut h = Mat::zeros(x.rows, x.cols);
    if x.rows > 1 {
        h.data[x.cols..].copy_from_slice(&x.data[..(x.rows - 1) * x.cols]);
    }
    h
}

fn add<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let mut out = a.clone();
    out.add_assign(b);
    out
}

fn check_aligned<T>(n: usize, name: &str, m: &Mat<T>, cols: usize) -> Result<(), ModelError> {
    if m.rows != n || m.cols != cols {
        return shape_err(name, (m.rows, m.cols), (n, cols));
    }
    Ok(())
}

/// `x̂ = D2(shift(x) + ε2, [D1([e + ε1, c]), c])` over a whole sequence.
pub fn decode_teacher_forced<T: Real>(
    params: &SystemParams<T>,
    config: &ModelConfig,
    e: &EmbeddingSequence<T>,
    c: &ControlTrack<T>,
    x_target: &Mat<T>,
    draw: &NoiseDraw<T>,
) -> Result<Mat<T>, ModelError> {
    let n = x_target.rows;
    check_aligned(n, "embedding", &e.values, config.embed_dim())?;
    check_aligned(n, "control", &c.values, config.control_dim())?;
    check_aligned(n, "target", x_target, config.n_bands)?;
    check_aligned(n, "eps1", &draw.eps1, config.embed_dim())?;
    check_aligned(n, "eps2", &draw.eps2, config.n_bands)?;
    let h1 = block_forward(&params.d1, &config.d1_block(), &add(&e.values, &draw.eps1).hcat(&c.values), None)?;
    let hist = add(&shift_history(x_target), &draw.eps2);
    Ok(block_forward(&params.d2, &config.d2_block(), &hist, Some(&h1.hcat(&c.values)))?)
}

fn masked_mse<T: Real>(a: &Mat<T>, b: &Mat<T>, rows: &Range<usize>) -> f64 {
    let cols = a.cols;
    let s: f64 = a.data[rows.start * cols..rows.end * cols]
        .iter()
        .zip(&b.data[rows.start * cols..rows.end * cols])
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    s / (rows.len() * cols) as f64
}

/// `coef · (a − b)` on the masked rows, zero elsewhere.
fn masked_diff<T: Real>(a: &Mat<T>, b: &Mat<T>, rows: &Range<usize>, coef: T) -> Mat<T> {
    let mut out = Mat::zeros(a.rows, a.cols);
    let cols = a.cols;
    for i in rows.start * cols..rows.end * cols {
        out.data[i] = coef * (a.data[i] - b.data[i]);
    }
    out
}

/// Losses of one segment without gradients.
pub fn loss_terms<T: Real>(
    params: &SystemParams<T>,
    config: &ModelConfig,
    example: &TrainingExample<'_, T>,
    draw: &NoiseDraw<T>,
    options: &LossOptions,
) -> Result<LossTerms, ModelError> {
    run(params, config, example, draw, options, None)
}

/// Losses of one segment; gradients of `scale · L` are added into `grads`.
pub fn loss_and_grads<T: Real>(
    params: &SystemParams<T>,
    config: &ModelConfig,
    example: &TrainingExample<'_, T>,
    draw: &NoiseDraw<T>,
    options: &LossOptions,
    scale: T,
    grads: &mut SystemParams<T>,
) -> Result<LossTerms, ModelError> {
    run(params, config, example, draw, options, Some((grads, scale)))
}

fn run<T: Real>(
    params: &SystemParams<T>,
    config: &ModelConfig,
    ex: &TrainingExample<'_, T>,
    draw: &NoiseDraw<T>,
    opts: &LossOptions,
    grads: Option<(&mut SystemParams<T>, T)>,
) -> Result<LossTerms, ModelError> {
    let n = ex.target.rows;
    let (nb, ed, cd) = (config.n_bands, config.embed_dim(), config.control_dim());
    check_aligned(n, "target", ex.target, nb)?;
    check_aligned(n, "f0", ex.f0, F0_CHANNELS)?;
    check_aligned(n, "eps1", &draw.eps1, ed)?;
    check_aligned(n, "eps2", &draw.eps2, nb)?;
    if ex.valid.is_empty() {
        return Err(ModelError::EmptyMask);
    }
    if ex.valid.end > n {
        return Err(ModelError::Shape(format!("valid range {:?} exceeds {n} frames", ex.valid)));
    }

    let k = draw.k;
    let enc_loss = opts.train_encoders && opts.lambda_enc > 0.0 && params.ea.is_some();
    let need_ea = k != T::zero() || enc_loss;
    let need_el = k != T::one() || enc_loss;
    let cfg_a = config.acoustic_block();
    let cfg_l = config.linguistic_block();
    let cfg_d1 = config.d1_block();
    let cfg_d2 = config.d2_block();

    let ea_out = if need_ea {
        let p = params.ea.as_ref().ok_or(ModelError::NoAcousticEncoder)?;
        let x = ex.acoustic.ok_or(ModelError::MissingAcoustic)?;
        check_aligned(n, "acoustic input", x, nb)?;
        Some(block_forward_cached(p, &cfg_a, x, None)?)
    } else {
        None
    };
    let el_out = if need_el {
        let y = ex.phones.ok_or(ModelError::MissingLabels)?;
        check_aligned(n, "phones", y, config.n_phones)?;
        Some(block_forward_cached(&params.el, &cfg_l, y, None)?)
    } else {
        None
    };
    let e = match (&ea_out, &el_out) {
        (Some((a, _)), Some((l, _))) => {
            switch_embedding(&EmbeddingSequence { values: a.clone() }, &EmbeddingSequence { values: l.clone() }, k)?.values
        }
        (Some((a, _)), None) => a.clone(),
        (None, Some((l, _))) => l.clone(),
        (None, None) => unreachable!("k is either nonzero or not one"),
    };

    let c = control_track(ex.f0, params.speaker_row(ex.speaker)?)?.values;
    let d1_in = add(&e, &draw.eps1).hcat(&c);
    let (h1, d1_cache) = block_forward_cached(&params.d1, &cfg_d1, &d1_in, None)?;
    let hist = add(&shift_history(ex.target), &draw.eps2);
    let (xhat, d2_cache) = block_forward_cached(&params.d2, &cfg_d2, &hist, Some(&h1.hcat(&c)))?;

    let recon = masked_mse(&xhat, ex.target, &ex.valid);
    let enc = match (&ea_out, &el_out) {
        (Some((a, _)), Some((l, _))) if enc_loss => masked_mse(a, l, &ex.valid),
        _ => 0.0,
    };
    let terms = LossTerms {
        total: opts.lambda_recon * recon + opts.lambda_enc * enc,
        recon,
        enc,
        k: k.as_f64(),
    };

    let Some((g, scale)) = grads else {
        return Ok(terms);
    };
    let nv = ex.valid.len();
    let cr = T::from_f64_lossy(2.0 * opts.lambda_recon / (nv * nb) as f64) * scale;
    let dxhat = masked_diff(&xhat, ex.target, &ex.valid, cr);
    let (_, dcond2) = block_backward(&params.d2, &cfg_d2, &d2_cache, &dxhat, &mut g.d2)?;
    let (dh1, mut dc) = dcond2.expect("d2 is conditioned").hsplit(h1.cols);
    let (dd1, _) = block_backward(&params.d1, &cfg_d1, &d1_cache, &dh1, &mut g.d1)?;
    let (de, dc1) = dd1.hsplit(ed);
    dc.add_assign(&dc1);
    let row = g.speakers.row_mut(ex.speaker);
    for t in 0..n {
        for (j, gj) in row.iter_mut().enumerate() {
            *gj += dc.data[t * cd + F0_CHANNELS + j];
        }
    }

    if !opts.train_encoders {
        return Ok(terms);
    }
    let ce = T::from_f64_lossy(2.0 * opts.lambda_enc / (nv * ed) as f64) * scale;
    let weighted = |w: T| if w == T::zero() { Mat::zeros(n, ed) } else { de.map(|v| v * w) };
    if let (Some((a, cache)), Some(gea), Some(pea)) = (&ea_out, g.ea.as_mut(), params.ea.as_ref()) {
        let mut dea = weighted(k);
        if let (true, Some((l, _))) = (enc_loss, &el_out) {
            dea.add_assign(&masked_diff(a, l, &ex.valid, ce));
        }
        block_backward(pea, &cfg_a, cache, &dea, gea)?;
    }
    if let Some((l, cache)) = &el_out {
        let mut del = weighted(T::one() - k);
        if let (true, Some((a, _))) = (enc_loss, &ea_out) {
            del.add_assign(&masked_diff(l, a, &ex.valid, ce));
        }
        block_backward(&params.el, &cfg_l, cache, &del, &mut g.el)?;
    }
    Ok(terms)
}
