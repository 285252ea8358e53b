//! Acceptance suite. Runs every criterion in order and prints one
//! PASS/FAIL line each; numeric arguments select a subset, e.g.
//! `cargo test --test acceptance -- 9 11`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use timbre_core::blocks::{
    block_backward, block_forward, block_forward_cached, init_params, BlockConfig, BlockParams, IncrementalState,
};
use timbre_core::corpus::{build_corpus, build_protocol, CorpusConfig, PhoneInventory, ProtocolCorpora};
use timbre_core::dsp::{band_center_frequencies, hz_to_mel, semitones_to_factor, AudioClip, FeatureConfig, MelExtractor, TransposeAugmenter};
use timbre_core::eval::{evaluate, EvalOptions, MetricReport};
use timbre_core::model::{
    control_track, decode_autoregressive, decode_teacher_forced, encode_linguistic, loss_and_grads, loss_terms,
    LossOptions, ModelConfig, NoiseDraw, NoiseSpec, SystemParams, TrainingExample,
};
use timbre_core::tensor::Mat;
use timbre_core::train::{
    adapt_decoder, initial_checkpoint, lr_schedule, train_supervised, AdaptOptions, Checkpoint, TrainConfig, Trainer,
};

// Pinned tolerances.
const AR_TOLERANCE: f64 = 1e-5;
const FD_TOLERANCE: f64 = 1e-3;
const LOSS_IDENTITY_TOLERANCE: f64 = 1e-12;
const SCHEDULE_TOLERANCE: f64 = 1e-12;
const OVERFIT_RATIO: f64 = 0.05;
const OVERFIT_MAX_STEPS: u64 = 2000;
const PROTOCOL_ERROR_RATIO: f64 = 1.5;
const PROTOCOL_PROBE_ACCURACY: f64 = 0.8;
const PROTOCOL_INVARIANCE: f64 = 1.0;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn bits(m: &Mat<f32>) -> Vec<u32> {
    m.data.iter().map(|v| v.to_bits()).collect()
}

fn receptive_fields() -> Outcome {
    let c = ModelConfig::full();
    let hop = FeatureConfig::default().hop_ms;
    let (d2, enc) = (c.d2_field(), c.encoder_field());
    let detail = format!(
        "d2 {} frames ({} ms, past {} future {}), encoder {} frames ({} ms)",
        d2.total(),
        d2.millis(hop),
        d2.past,
        d2.future,
        enc.total(),
        enc.millis(hop)
    );
    check(
        d2.total() == 39 && d2.future == 0 && d2.millis(hop) == 195.0 && d2.millis(hop) < 200.0 && enc.total() == 43 && enc.past == 21 && enc.future == 21,
        detail,
    )
}

fn causality() -> Outcome {
    let c = ModelConfig::full();
    let d2 = c.d2_block();
    let bp = init_params::<f32>(&d2, 11);
    let params = SystemParams::<f32>::init(&c, 12).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 80;
    let x = random(n, d2.in_dim, &mut rng).cast::<f32>();
    let cond = random(n, d2.cond_dim, &mut rng).cast::<f32>();
    let base = block_forward(&bp, &d2, &x, Some(&cond)).unwrap();

    let e = encode_linguistic(&params, &c, &Mat::from_fn(n, c.n_phones, |t, j| f32::from(u8::from(j == t % c.n_phones)))).unwrap();
    let ctl = control_track(&random(n, 2, &mut rng).cast::<f32>(), params.speakers.row(0)).unwrap();
    let target = random(n, c.n_bands, &mut rng).cast::<f32>();
    let silent = NoiseDraw::silent(n, &c, 1.0f32);
    let model_base = decode_teacher_forced(&params, &c, &e, &ctl, &target, &silent).unwrap();

    let trials = 100;
    for trial in 0..trials {
        let t = rng.random_range(0..n);
        let mut xp = x.clone();
        let mut cp = cond.clone();
        for v in xp.row_mut(t) {
            *v += rng.random_range(0.5f32..2.0);
        }
        for v in cp.row_mut(t) {
            *v -= rng.random_range(0.5f32..2.0);
        }
        let y = block_forward(&bp, &d2, &xp, Some(&cp)).unwrap();
        if bits(&y.slice_rows(0, t)) != bits(&base.slice_rows(0, t)) {
            return Err(format!("trial {trial}: block output before frame {t} changed"));
        }
        if y.row(t) == base.row(t) {
            return Err(format!("trial {trial}: perturbation at frame {t} had no effect"));
        }
        let mut tp = target.clone();
        for v in tp.row_mut(t) {
            *v += 1.0;
        }
        let m = decode_teacher_forced(&params, &c, &e, &ctl, &tp, &silent).unwrap();
        if bits(&m.slice_rows(0, t + 1)) != bits(&model_base.slice_rows(0, t + 1)) {
            return Err(format!("trial {trial}: model output up to frame {t} changed"));
        }
    }
    Ok(format!("{trials} trials, block and teacher-forced decoder, past outputs bit-identical"))
}

fn ar_consistency() -> Outcome {
    let c = ModelConfig::full();
    let d2 = c.d2_block();
    let bp = init_params::<f32>(&d2, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n = 50;
    let x = random(n, d2.in_dim, &mut rng).cast::<f32>();
    let cond = random(n, d2.cond_dim, &mut rng).cast::<f32>();
    let parallel = block_forward(&bp, &d2, &x, Some(&cond)).unwrap();
    let mut state = IncrementalState::new(&d2, 1).unwrap();
    let mut worst_block = 0.0f32;
    for t in 0..n {
        let y = state.step(&bp, &d2, &x.slice_rows(t, t + 1), Some(&cond.slice_rows(t, t + 1))).unwrap();
        for (a, b) in y.row(0).iter().zip(parallel.row(t)) {
            worst_block = worst_block.max((a - b).abs());
        }
    }

    let params = SystemParams::<f32>::init(&c, 23).map_err(|e| e.to_string())?;
    let e = encode_linguistic(&params, &c, &Mat::from_fn(n, c.n_phones, |t, j| f32::from(u8::from(j == (t / 4) % c.n_phones)))).unwrap();
    let ctl = control_track(&random(n, 2, &mut rng).cast::<f32>(), params.speakers.row(1)).unwrap();
    let history = random(n, c.n_bands, &mut rng).cast::<f32>();
    let tf = decode_teacher_forced(&params, &c, &e, &ctl, &history, &NoiseDraw::silent(n, &c, 0.0)).unwrap();
    let ar = decode_autoregressive(&params, &c, &e, &ctl, Some(&history)).unwrap();
    let worst_model = tf.data.iter().zip(&ar.data).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    check(
        (worst_block as f64) < AR_TOLERANCE && (worst_model as f64) < AR_TOLERANCE,
        format!("max |step - parallel| block {worst_block:.2e}, full decoder {worst_model:.2e} (tol {AR_TOLERANCE:.0e})"),
    )
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Worst relative error over sampled parameters and all inputs of a block.
fn block_fd(config: &BlockConfig, seed: u64) -> f64 {
    let p = init_params::<f64>(config, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let n = 12;
    let x = random(n, config.in_dim, &mut rng);
    let cond = (config.cond_dim > 0).then(|| random(n, config.cond_dim, &mut rng));
    let w = random(n, config.out_dim(), &mut rng);
    let f = |p: &BlockParams<f64>, x: &Mat<f64>, c: Option<&Mat<f64>>| -> f64 {
        let y = block_forward(p, config, x, c).unwrap();
        y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = block_forward_cached(&p, config, &x, cond.as_ref()).unwrap();
    let mut g = p.zeros_like();
    let (dx, _) = block_backward(&p, config, &cache, &w, &mut g).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let analytic: Vec<Vec<f64>> = g.tensors().iter().map(|m| m.data.clone()).collect();
    for (ti, a) in analytic.iter().enumerate() {
        for i in (0..a.len()).step_by(1 + a.len() / 10) {
            let mut plus = p.clone();
            plus.tensors_mut()[ti].data[i] += h;
            let mut minus = p.clone();
            minus.tensors_mut()[ti].data[i] -= h;
            let num = (f(&plus, &x, cond.as_ref()) - f(&minus, &x, cond.as_ref())) / (2.0 * h);
            worst = worst.max(rel_err(a[i], num));
        }
    }
    for i in 0..x.data.len() {
        let mut xp = x.clone();
        xp.data[i] += h;
        let mut xm = x.clone();
        xm.data[i] -= h;
        let num = (f(&p, &xp, cond.as_ref()) - f(&p, &xm, cond.as_ref())) / (2.0 * h);
        worst = worst.max(rel_err(dx.data[i], num));
    }
    worst
}

struct LossInputs {
    acoustic: Mat<f64>,
    target: Mat<f64>,
    phones: Mat<f64>,
    f0: Mat<f64>,
}

impl LossInputs {
    fn new(c: &ModelConfig, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LossInputs {
            acoustic: random(n, c.n_bands, &mut rng),
            target: random(n, c.n_bands, &mut rng),
            phones: Mat::from_fn(n, c.n_phones, |t, j| f64::from(u8::from((t / 3) % c.n_phones == j))),
            f0: random(n, 2, &mut rng),
        }
    }

    fn example(&self) -> TrainingExample<'_, f64> {
        TrainingExample {
            acoustic: Some(&self.acoustic),
            target: &self.target,
            phones: Some(&self.phones),
            f0: &self.f0,
            speaker: 1,
            valid: 4..self.target.rows - 3,
        }
    }
}

fn loss_fd(c: &ModelConfig, k: f64) -> f64 {
    let p = SystemParams::<f64>::init(c, 31).unwrap();
    let inputs = LossInputs::new(c, 20, 32);
    let ex = inputs.example();
    let draw = NoiseDraw::sample(&NoiseSpec::default(), 20, c, &mut ChaCha8Rng::seed_from_u64(33)).with_k(k);
    let opts = LossOptions::default();
    let mut g = p.zeros_like();
    loss_and_grads(&p, c, &ex, &draw, &opts, 1.0, &mut g).unwrap();
    let f = |q: &SystemParams<f64>| loss_terms(q, c, &ex, &draw, &opts).unwrap().total;
    let h = 1e-5;
    let analytic: Vec<Vec<f64>> = g.tensors().iter().map(|m| m.data.clone()).collect();
    let mut worst = 0.0f64;
    for (ti, a) in analytic.iter().enumerate() {
        for i in (0..a.len()).step_by(1 + a.len() / 6) {
            let mut plus = p.clone();
            plus.tensors_mut()[ti].data[i] += h;
            let mut minus = p.clone();
            minus.tensors_mut()[ti].data[i] -= h;
            worst = worst.max(rel_err(a[i], (f(&plus) - f(&minus)) / (2.0 * h)));
        }
    }
    worst
}

fn gradients() -> Outcome {
    let c = ModelConfig::micro();
    let parts = [
        ("E_A", block_fd(&c.acoustic_block(), 1)),
        ("E_L", block_fd(&c.linguistic_block(), 2)),
        ("D1", block_fd(&c.d1_block(), 3)),
        ("D2", block_fd(&c.d2_block(), 4)),
        ("loss k=1", loss_fd(&c, 1.0)),
        ("loss k=0", loss_fd(&c, 0.0)),
    ];
    let detail = parts.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    check(parts.iter().all(|(_, e)| *e < FD_TOLERANCE), format!("max relative error {detail} (tol {FD_TOLERANCE:.0e})"))
}

fn zero_block(b: &BlockParams<f64>) -> bool {
    b.tensors().iter().all(|m| m.data.iter().all(|&v| v == 0.0))
}

fn routing() -> Outcome {
    let c = ModelConfig::micro();
    let p = SystemParams::<f64>::init(&c, 41).unwrap();
    let inputs = LossInputs::new(&c, 20, 42);
    let recon_only = LossOptions { lambda_enc: 0.0, ..LossOptions::default() };
    let grads = |k: f64| {
        let draw = NoiseDraw::sample(&NoiseSpec::default(), 20, &c, &mut ChaCha8Rng::seed_from_u64(43)).with_k(k);
        let mut g = p.zeros_like();
        loss_and_grads(&p, &c, &inputs.example(), &draw, &recon_only, 1.0, &mut g).unwrap();
        g
    };
    let (g1, g0) = (grads(1.0), grads(0.0));
    let ok = zero_block(&g1.el) && !zero_block(g1.ea.as_ref().unwrap()) && zero_block(g0.ea.as_ref().unwrap()) && !zero_block(&g0.el);
    check(ok, "k=1: dL_recon/dE_L == 0 and E_A nonzero; k=0: dL_recon/dE_A == 0 and E_L nonzero".into())
}

fn loss_identities() -> Outcome {
    let c = ModelConfig::micro();
    let inputs = LossInputs::new(&c, 20, 51);
    let draw = NoiseDraw::sample(&NoiseSpec::default(), 20, &c, &mut ChaCha8Rng::seed_from_u64(52));
    let opts = LossOptions::default();
    let p = SystemParams::<f64>::init(&c, 53).unwrap();
    let l = loss_terms(&p, &c, &inputs.example(), &draw, &opts).unwrap();
    let combo = l.recon + 0.2 * l.enc;
    let weights_ok = opts.lambda_recon == 1.0 && opts.lambda_enc == 0.2;
    let sum_ok = (l.total - combo).abs() <= LOSS_IDENTITY_TOLERANCE * l.total.abs().max(1.0);

    // both encoders emit tanh(0) everywhere
    let mut same = p.clone();
    for b in [same.ea.as_mut().unwrap(), &mut same.el] {
        b.out2_w = Mat::zeros(b.out2_w.rows, b.out2_w.cols);
        b.out2_b = Mat::zeros(1, b.out2_b.cols);
    }
    let enc_zero = loss_terms(&same, &c, &inputs.example(), &draw, &opts).unwrap().enc;

    // D2 emits its output bias, which equals the target
    let mut exact = p.clone();
    exact.d2.out2_w = Mat::zeros(exact.d2.out2_w.rows, exact.d2.out2_w.cols);
    let row: Vec<f64> = (0..c.n_bands).map(|b| 0.1 * b as f64 - 0.2).collect();
    exact.d2.out2_b = Mat::from_fn(1, c.n_bands, |_, b| row[b]);
    let mut perfect = LossInputs::new(&c, 20, 54);
    perfect.target = Mat::from_fn(20, c.n_bands, |_, b| row[b]);
    let recon_zero = loss_terms(&exact, &c, &perfect.example(), &draw, &opts).unwrap().recon;
    check(
        weights_ok && sum_ok && enc_zero == 0.0 && recon_zero == 0.0,
        format!(
            "L - (L_recon + 0.2 L_enc) = {:.1e}, L_enc(coincident) = {enc_zero}, L_recon(perfect) = {recon_zero}",
            l.total - combo
        ),
    )
}

fn schedule() -> Outcome {
    let c = TrainConfig::default();
    let points = [(700, 5e-4), (350, 2.5e-4), (10_700, 7.5e-5)];
    let worst = points.iter().map(|&(s, v)| (lr_schedule(s, &c) - v).abs()).fold(0.0, f64::max);
    check(
        worst < SCHEDULE_TOLERANCE,
        format!(
            "lr(700) = {:e}, lr(350) = {:e}, lr(10700) = {:e}, max deviation {worst:.1e}",
            lr_schedule(700, &c),
            lr_schedule(350, &c),
            lr_schedule(10_700, &c)
        ),
    )
}

fn encoder_bytes(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    for b in [ck.params.ea.as_ref().unwrap(), &ck.params.el] {
        for m in b.tensors() {
            out.extend(m.data.iter().flat_map(|v| v.to_le_bytes()));
        }
    }
    out
}

fn freeze_contract() -> Outcome {
    let pc = common::corpora(61);
    let phase_a = train_supervised(&pc.multi.train, &common::model(), &common::train(50), &common::features(), None)
        .map_err(|e| e.to_string())?;
    let adapted = adapt_decoder(&phase_a, &pc.target.train, &common::train(200), AdaptOptions { steps: 200, from_scratch: false }, None)
        .map_err(|e| e.to_string())?;
    let decoder_moved = adapted.params.d2 != phase_a.params.d2;
    check(
        encoder_bytes(&adapted) == encoder_bytes(&phase_a) && decoder_moved && adapted.step == 200,
        format!("200 adaptation steps; encoder bytes identical, decoder changed: {decoder_moved}"),
    )
}

/// Trains the quarter-width model on one utterance, checking every 100
/// steps. Stops at the first check below the target ratio or at the step
/// budget; `stop_at` instead runs to exactly that step.
fn overfit(stop_at: Option<u64>) -> (Checkpoint, f64) {
    let features = FeatureConfig::default();
    let extractor = MelExtractor::new(&features).unwrap();
    let corpus = build_corpus(1, 1, 0, 3.0, 7, &PhoneInventory::standard(), &extractor).unwrap();
    let utts = &corpus.train[..1];
    let tc = TrainConfig { batch_size: 4, max_steps: OVERFIT_MAX_STEPS, seed: 1, ..TrainConfig::default() };
    let ck = initial_checkpoint(utts, &ModelConfig::toy(), &tc, &features).unwrap();
    let mut trainer = Trainer::new(ck, utts).unwrap();
    let last = stop_at.unwrap_or(OVERFIT_MAX_STEPS);
    let mut first = None;
    let (mut acc, mut count, mut ratio) = (0.0, 0, f64::INFINITY);
    while trainer.checkpoint().step < last {
        let r = trainer.step().unwrap();
        let initial = *first.get_or_insert(r.recon);
        acc += r.recon;
        count += 1;
        if r.step % 100 == 0 {
            ratio = acc / count as f64 / initial;
            (acc, count) = (0.0, 0);
            if ratio < OVERFIT_RATIO && stop_at.is_none() {
                break;
            }
        }
    }
    (trainer.into_checkpoint(), ratio)
}

fn overfit_smoke(state: &mut Option<(Vec<u8>, u64)>) -> Outcome {
    let start = Instant::now();
    let (ck, ratio) = overfit(None);
    let step = ck.step;
    *state = Some((ck.to_container().to_bytes(), step));
    check(
        ratio < OVERFIT_RATIO,
        format!(
            "mean L_recon of steps {}..{step} is {:.2}% of the first step's (limit {}% within {OVERFIT_MAX_STEPS} steps), {:.0} s",
            step - 99,
            100.0 * ratio,
            100.0 * OVERFIT_RATIO,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn determinism(state: &Option<(Vec<u8>, u64)>) -> Outcome {
    let (first, steps) = match state {
        Some(s) => s.clone(),
        None => {
            let (ck, _) = overfit(None);
            (ck.to_container().to_bytes(), ck.step)
        }
    };
    let (second, _) = overfit(Some(steps));
    let second = second.to_container().to_bytes();
    check(first == second, format!("two {steps}-step runs, {} checkpoint bytes, identical: {}", first.len(), first == second))
}

/// Four labelled singers with about ten minutes of audio, a fifth singer
/// with six songs, one held out for validation.
fn protocol_corpora() -> ProtocolCorpora {
    let cfg = CorpusConfig {
        n_singers: 4,
        songs_per_singer: 9,
        validation_songs: 1,
        song_seconds: 20.0,
        target_songs: 6,
        target_validation_songs: 1,
        clone_seconds: 60.0,
        ..CorpusConfig::default()
    };
    build_protocol(&cfg, 2024, &MelExtractor::new(&FeatureConfig::default()).unwrap()).unwrap()
}

/// Desk-scale budget: short warm-up and a higher peak rate than the
/// full-size schedule, which assumes tens of thousands of updates.
fn protocol_train(steps: u64) -> TrainConfig {
    TrainConfig { batch_size: 8, max_steps: steps, warmup_steps: 300, base_lr: 2e-3, seed: 3, ..TrainConfig::default() }
}

const PHASE_A_STEPS: u64 = 3000;
const PHASE_B_STEPS: u64 = 1500;
const BASELINE_STEPS: u64 = 3000;

fn protocol() -> Outcome {
    let start = Instant::now();
    let pc = protocol_corpora();
    let features = FeatureConfig::default();
    let model = ModelConfig::toy();
    let phase_a = train_supervised(&pc.multi.train, &model, &protocol_train(PHASE_A_STEPS), &features, None)
        .map_err(|e| e.to_string())?;
    let semi = adapt_decoder(
        &phase_a,
        &pc.target.train,
        &protocol_train(PHASE_B_STEPS),
        AdaptOptions { steps: PHASE_B_STEPS, from_scratch: false },
        None,
    )
    .map_err(|e| e.to_string())?;
    let baseline_model = ModelConfig { acoustic_encoder: false, ..model };
    let baseline = train_supervised(&pc.target.train, &baseline_model, &protocol_train(BASELINE_STEPS), &features, None)
        .map_err(|e| e.to_string())?;
    let opts = EvalOptions::default();
    let run = |ck: &Checkpoint, name: &str| -> Result<MetricReport, String> {
        evaluate(ck, name, &pc.target.validation, &pc.target.train, &opts).map_err(|e| e.to_string())
    };
    let s = run(&semi, "semi-supervised")?;
    let b = run(&baseline, "supervised")?;
    let (semi_err, base_err) = (s.autoregressive_error.unwrap(), b.autoregressive_error.unwrap());
    let ratio = semi_err / base_err;
    let (pa, pl) = (s.probe_acoustic.unwrap(), s.probe_linguistic.unwrap());
    let inv = s.invariance_ratio.unwrap();
    let a = ratio <= PROTOCOL_ERROR_RATIO;
    let probes = pa > PROTOCOL_PROBE_ACCURACY && pl > PROTOCOL_PROBE_ACCURACY;
    let c = inv < PROTOCOL_INVARIANCE;
    let verdict = |ok: bool| if ok { "ok" } else { "not met" };
    check(
        a && probes && c,
        format!(
            "(a) AR error semi {semi_err:.3} / supervised {base_err:.3} = {ratio:.2} (<= {PROTOCOL_ERROR_RATIO}) {}; \
             (b) probes E_A {pa:.3}, E_L {pl:.3} (> {PROTOCOL_PROBE_ACCURACY}) {}; \
             (c) invariance {inv:.3} (< {PROTOCOL_INVARIANCE}) {}; {:.0} s",
            verdict(a),
            verdict(probes),
            verdict(c),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn augmentation() -> Outcome {
    let features = FeatureConfig::default();
    let augmenter = TransposeAugmenter::new(&features).unwrap();
    let centres = band_center_frequencies(features.n_bands, features.f_lo, features.f_hi);
    let nearest = |f: f64| {
        let m = hz_to_mel(f);
        (0..centres.len()).min_by(|&a, &b| (hz_to_mel(centres[a]) - m).abs().total_cmp(&(hz_to_mel(centres[b]) - m).abs())).unwrap()
    };
    let mut cases = 0;
    for &freq in &[220.0, 311.0, 440.0, 622.0, 880.0] {
        let clip = AudioClip::tone(freq, 0.5, 0.5, features.sample_rate);
        let labels = features.n_frames(clip.samples.len());
        for &semitones in &[-4.0, -2.0, 0.0, 2.0, 4.0] {
            let factor = semitones_to_factor(semitones);
            let mel = augmenter.apply(&clip, labels, factor).unwrap();
            if mel.n_frames() != labels {
                return Err(format!("{freq} Hz x {factor:.3}: {} frames for {labels} labels", mel.n_frames()));
            }
            let row = mel.values.row(labels / 2);
            let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            let want = nearest(freq * factor);
            if peak != want {
                return Err(format!("{freq} Hz x {factor:.3}: peak band {peak}, nearest band {want}"));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} tone/factor pairs: peak band and frame count as expected"))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let mut overfit_state = None;
    let mut failures = 0;
    let mut run = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n:>2} {name}: PASS ({secs:.1} s) {d}"),
            Err(d) => {
                failures += 1;
                println!("criterion {n:>2} {name}: FAIL ({secs:.1} s) {d}");
            }
        }
    };
    run(1, "receptive fields", &mut receptive_fields);
    run(2, "causality", &mut causality);
    run(3, "incremental decoding", &mut ar_consistency);
    run(4, "gradients", &mut gradients);
    run(5, "gradient routing", &mut routing);
    run(6, "loss identities", &mut loss_identities);
    run(7, "lr schedule", &mut schedule);
    run(8, "freeze contract", &mut freeze_contract);
    run(9, "overfit", &mut || overfit_smoke(&mut overfit_state));
    run(11, "determinism", &mut || determinism(&overfit_state));
    run(12, "augmentation", &mut augmentation);
    run(10, "protocol", &mut protocol);
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
