//! Training-loop contracts: checkpoints, resume, freezing, label blindness
//! of adaptation, determinism and the divergence guard.

mod common;

use rand::{Rng, SeedableRng};
use timbre_core::model::ModelConfig;
use timbre_core::tensor::Mat;
use timbre_core::train::{
    adapt_decoder, clone_voice, initial_checkpoint, load_checkpoint, lr_schedule, save_checkpoint, train_supervised,
    AdamConfig, AdamState, AdaptOptions, Checkpoint, Phase, TrainError, Trainer,
};

fn phase_a(steps: u64) -> (timbre_core::corpus::ProtocolCorpora, Checkpoint) {
    let pc = common::corpora(4);
    let ck = train_supervised(&pc.multi.train, &common::model(), &common::train(steps), &common::features(), None).unwrap();
    (pc, ck)
}

fn bytes(ck: &Checkpoint) -> Vec<u8> {
    ck.to_container().to_bytes()
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let (_, ck) = phase_a(5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&ck, &path).unwrap();
    let back = load_checkpoint(&path, Some(&ck.model)).unwrap();
    assert_eq!(back, ck);
    assert_eq!(bytes(&back), bytes(&ck));
}

#[test]
fn resume_continues_the_uninterrupted_run() {
    let pc = common::corpora(4);
    let utts = &pc.multi.train;
    let (m, t, f) = (common::model(), common::train(50), common::features());
    let straight = train_supervised(utts, &m, &t, &f, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    let mut first = Trainer::new(initial_checkpoint(utts, &m, &t, &f).unwrap(), utts).unwrap();
    first.run(20, None).unwrap();
    save_checkpoint(first.checkpoint(), &path).unwrap();
    drop(first);
    let mut second = Trainer::new(load_checkpoint(&path, None).unwrap(), utts).unwrap();
    second.run(50, None).unwrap();
    assert_eq!(bytes(second.checkpoint()), bytes(&straight));
}

#[test]
fn mismatched_architecture_is_refused() {
    let (_, ck) = phase_a(1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&ck, &path).unwrap();
    let mut other = ck.model.clone();
    other.d2.residual_channels += 1;
    assert!(load_checkpoint(&path, Some(&other)).is_err());
    // the speaker count is not part of the architecture
    let more_speakers = ModelConfig { n_speakers: 40, ..ck.model.clone() };
    assert!(load_checkpoint(&path, Some(&more_speakers)).is_ok());
}

#[test]
fn adaptation_freezes_both_encoders() {
    let (pc, base) = phase_a(10);
    let opts = AdaptOptions { steps: 30, from_scratch: false };
    let adapted = adapt_decoder(&base, &pc.target.train, &common::train(30), opts, None).unwrap();
    assert_eq!(adapted.phase, Phase::Adapt);
    assert_eq!(adapted.step, 30);
    let (a, b) = (base.params.ea.as_ref().unwrap(), adapted.params.ea.as_ref().unwrap());
    for (x, y) in a.tensors().iter().zip(b.tensors()) {
        assert_eq!(x.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
    assert_eq!(base.params.el, adapted.params.el);
    assert_ne!(base.params.d2, adapted.params.d2);
    // one new speaker row for the target singer; existing rows untouched
    let target = pc.target.train[0].singer_id;
    assert_eq!(adapted.speakers.len(), base.speakers.len() + 1);
    assert_eq!(adapted.speaker_row(target), Some(base.speakers.len()));
    for r in 0..base.speakers.len() {
        assert_eq!(adapted.params.speakers.row(r), base.params.speakers.row(r));
    }
    // encoder moments were never written
    let names = adapted.params.names();
    for (n, m) in names.iter().zip(&adapted.optimizer.m) {
        if n.starts_with("ea/") || n.starts_with("el/") {
            assert!(m.data.iter().all(|&v| v == 0.0), "{n}");
        }
    }
}

#[test]
fn adaptation_never_reads_labels() {
    let (pc, base) = phase_a(5);
    let opts = AdaptOptions { steps: 10, from_scratch: false };
    let labelled = adapt_decoder(&base, &pc.target.train, &common::train(10), opts, None).unwrap();
    let stripped: Vec<_> = pc.target.train.iter().map(|u| u.without_labels()).collect();
    let blind = adapt_decoder(&base, &stripped, &common::train(10), opts, None).unwrap();
    assert_eq!(bytes(&labelled), bytes(&blind));
}

#[test]
fn adaptation_from_scratch_resets_the_decoder_only() {
    let (pc, base) = phase_a(5);
    let opts = AdaptOptions { steps: 0, from_scratch: true };
    let fresh = adapt_decoder(&base, &pc.target.train, &common::train(0), opts, None).unwrap();
    assert_ne!(fresh.params.d1, base.params.d1);
    assert_eq!(fresh.params.ea, base.params.ea);
}

#[test]
fn adaptation_requires_an_acoustic_encoder() {
    let pc = common::corpora(4);
    let m = ModelConfig { acoustic_encoder: false, ..common::model() };
    let base = train_supervised(&pc.multi.train, &m, &common::train(2), &common::features(), None).unwrap();
    let r = adapt_decoder(&base, &pc.target.train, &common::train(2), AdaptOptions { steps: 2, from_scratch: false }, None);
    assert!(r.is_err());
    // supervised cloning of the baseline works and trains the encoder
    let cloned = clone_voice(&base, &pc.cloning, &common::train(3), true, None).unwrap();
    assert_eq!(cloned.phase, Phase::Supervised);
    assert_ne!(cloned.params.el, base.params.el);
}

#[test]
fn identical_seeds_give_identical_checkpoints() {
    let (_, a) = phase_a(15);
    let (_, b) = phase_a(15);
    assert_eq!(bytes(&a), bytes(&b));
    let pc = common::corpora(4);
    let t = timbre_core::train::TrainConfig { seed: 10, ..common::train(15) };
    let c = train_supervised(&pc.multi.train, &common::model(), &t, &common::features(), None).unwrap();
    assert_ne!(c.params, a.params);
}

#[test]
fn divergence_returns_the_last_good_checkpoint() {
    let pc = common::corpora(4);
    let utts = &pc.multi.train;
    let mut ck = initial_checkpoint(utts, &common::model(), &common::train(5), &common::features()).unwrap();
    ck.params.d2.tensors_mut()[0].data[0] = f32::NAN;
    let before = ck.clone();
    let mut t = Trainer::new(ck, utts).unwrap();
    match t.step() {
        Err(TrainError::Diverged { step, checkpoint }) => {
            assert_eq!(step, 0);
            assert_eq!(checkpoint.step, 0);
            assert_eq!(checkpoint.optimizer, before.optimizer);
        }
        other => panic!("expected divergence, got {:?}", other.map(|r| r.step)),
    }
}

#[test]
fn each_update_uses_the_next_schedule_value() {
    let pc = common::corpora(4);
    let utts = &pc.multi.train;
    let t = common::train(3);
    let mut tr = Trainer::new(initial_checkpoint(utts, &common::model(), &t, &common::features()).unwrap(), utts).unwrap();
    let recs = tr.run(3, None).unwrap();
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r.step, i as u64 + 1);
        assert_eq!(r.lr, lr_schedule(i as u64 + 1, &t));
        assert!(r.loss.is_finite() && r.grad_norm > 0.0);
    }
}

/// Textbook scalar Adam, written independently of the tensor version.
fn scalar_adam(p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], t: i32, lr: f64) {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = m[i] / (1.0 - b1.powi(t));
        let v_hat = v[i] / (1.0 - b2.powi(t));
        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[test]
fn adam_matches_scalar_reference_for_100_steps() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let init: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut a = Mat::from_vec(3, 4, init.clone());
    let mut st = AdamState::zeros(&[&a]);
    let (mut p, mut m, mut v) = (init, vec![0.0; 12], vec![0.0; 12]);
    for t in 1..=100 {
        let g: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lr = 1e-3 * (1.0 + (t as f64 * 0.1).sin());
        st.update(&AdamConfig::default(), vec![&mut a], vec![&Mat::from_vec(3, 4, g.clone())], lr, &[true]);
        scalar_adam(&mut p, &mut m, &mut v, &g, t, lr);
    }
    assert_eq!(st.t, 100);
    for (x, y) in a.data.iter().zip(&p) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}
