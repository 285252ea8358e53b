use super::forward::{control_track, encode_acoustic, encode_linguistic};
use super::{ControlTrack, EmbeddingSequence, ModelConfig, ModelError, SystemParams};
use crate::blocks::{block_forward, IncrementalState};
use crate::tensor::{Mat, Real};

/// Noise-free decoding with `D2` stepped one frame at a time. The history
/// starts at zero; each step consumes the previous prediction, or the
/// previous row of `forced` when given (which reproduces teacher forcing).
pub fn decode_autoregressive<T: Real>(
    params: &SystemParams<T>,
    config: &ModelConfig,
    e: &EmbeddingSequence<T>,
    c: &ControlTrack<T>,
    forced: Option<&Mat<T>>,
) -> Result<Mat<T>, ModelError> {
    let n = e.n_frames();
    if c.n_frames() != n || c.values.cols != config.control_dim() || e.values.cols != config.embed_dim() {
        return Err(ModelError::Shape(format!(
            "embedding {:?} and control {:?} are not aligned",
            e.values.shape(),
            c.values.shape()
        )));
    }
    if let Some(f) = forced {
        if f.shape() != (n, config.n_bands) {
            return Err(ModelError::Shape(format!("forced history is {:?}", f.shape())));
        }
    }
    let h1 = block_forward(&params.d1, &config.d1_block(), &e.values.hcat(&c.values), None)?;
    let cond = h1.hcat(&c.values);
    let d2 = config.d2_block();
    let mut state = IncrementalState::new(&d2, 1)?;
    let mut out = Mat::zeros(n, config.n_bands);
    let mut prev = Mat::zeros(1, config.n_bands);
    for t in 0..n {
        let cond_t = cond.slice_rows(t, t + 1);
        let y = state.step(&params.d2, &d2, &prev, Some(&cond_t))?;
        out.row_mut(t).copy_from_slice(y.row(0));
        prev = match forced {
            Some(f) => f.slice_rows(t, t + 1),
            None => y,
        };
    }
    Ok(out)
}

/// Synthesis from phones: `E_L` feeds the decoder.
pub fn infer_autoregressive<T: Real>(
    params: &SystemParams<T>,
    config: &ModelConfig,
    phones: &Mat<T>,
    f0: &Mat<T>,
    speaker: usize,
) -> Result<Mat<T>, ModelError> {
    let e = encode_linguistic(params, config, phones)?;
    let c = control_track(f0, params.speaker_row(speaker)?)?;
    decode_autoregressive(params, config, &e, &c, None)
}

/// Voice conversion: `E_A` on the source mel feeds the decoder, which is
/// conditioned on the target speaker and the given F0.
pub fn infer_voice_conversion<T: Real>(
    params: &SystemParams<T>,
    config: &ModelConfig,
    mel_source: &Mat<T>,
    f0: &Mat<T>,
    speaker: usize,
) -> Result<Mat<T>, ModelError> {
    let e = encode_acoustic(params, config, mel_source)?;
    let c = control_track(f0, params.speaker_row(speaker)?)?;
    decode_autoregressive(params, config, &e, &c, None)
}
