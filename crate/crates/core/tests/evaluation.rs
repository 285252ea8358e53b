//! Evaluation metrics, inference drivers and the experiment matrix on
//! micro-sized models.

mod common;

use timbre_core::corpus::{phones_from_text, CorpusError, LinguisticFrames, Utterance};
use timbre_core::dsp::{AudioClip, F0Track, MelSpectrogram};
use timbre_core::eval::{
    convert, evaluate, run_experiment_matrix, synthesize, EvalError, EvalOptions, MatrixPlan, SYSTEMS,
};
use timbre_core::model::{FeatureNorm, ModelConfig, SystemParams};
use timbre_core::tensor::Mat;
use timbre_core::train::{initial_checkpoint, train_supervised, Checkpoint};

fn untrained() -> (timbre_core::corpus::ProtocolCorpora, Checkpoint) {
    let pc = common::corpora(4);
    let ck = initial_checkpoint(&pc.multi.train, &common::model(), &common::train(0), &common::features()).unwrap();
    (pc, ck)
}

fn in_range(x: Option<f64>) -> bool {
    x.is_some_and(|v| (0.0..=1.0).contains(&v))
}

#[test]
fn report_fields_are_well_formed() {
    let (pc, ck) = untrained();
    let r = evaluate(&ck, "untrained", &pc.multi.validation, &pc.multi.train, &EvalOptions::default()).unwrap();
    assert_eq!(r.n_utterances, pc.multi.validation.len());
    for e in [r.teacher_forced_error, r.autoregressive_error, r.conversion_error, r.embedding_distance] {
        assert!(e.unwrap() >= 0.0);
    }
    for p in [r.probe_acoustic, r.probe_acoustic_train, r.probe_linguistic, r.probe_linguistic_train] {
        assert!(in_range(p));
    }
    assert!(r.invariance_ratio.unwrap() >= 0.0);
}

#[test]
fn empty_validation_is_an_error() {
    let (pc, ck) = untrained();
    assert!(matches!(evaluate(&ck, "x", &[], &pc.multi.train, &EvalOptions::default()), Err(EvalError::EmptyValidation)));
}

#[test]
fn baseline_reports_no_acoustic_metrics() {
    let pc = common::corpora(4);
    let m = ModelConfig { acoustic_encoder: false, ..common::model() };
    let ck = initial_checkpoint(&pc.multi.train, &m, &common::train(0), &common::features()).unwrap();
    let opts = EvalOptions { autoregressive: false, ..EvalOptions::default() };
    let r = evaluate(&ck, "sup", &pc.multi.validation, &pc.multi.train, &opts).unwrap();
    assert!(r.teacher_forced_error.is_some());
    assert!(r.autoregressive_error.is_none());
    assert!(r.embedding_distance.is_none() && r.probe_acoustic.is_none() && r.invariance_ratio.is_none());
    assert!(r.probe_linguistic.is_some());
}

/// With one phone per band and the linguistic weights copied into the
/// acoustic encoder, feeding the one-hot labels as "mel" makes the two
/// encoders agree exactly.
#[test]
fn identical_encoders_have_zero_distance() {
    let mut m = ModelConfig { n_phones: 6, ..ModelConfig::micro() };
    m.n_speakers = 1;
    let mut params = SystemParams::<f32>::init(&m, 2).unwrap();
    params.ea = Some(params.el.clone());
    let (_, ck0) = untrained();
    let ids: Vec<u16> = (0..120).map(|t| (t / 7 % 6) as u16).collect();
    let ling = LinguisticFrames { phone_id: ids };
    let mel = MelSpectrogram { values: ling.one_hot(6) };
    let utt = Utterance {
        audio: AudioClip::tone(220.0, 0.6, 0.3, 32_000),
        mel,
        ling: Some(ling),
        f0: F0Track::from_hz(vec![220.0; 120]),
        singer_id: 0,
    };
    let mut ck = ck0.clone();
    ck.model = m;
    ck.params = params;
    ck.speakers = vec![0];
    ck.norm = FeatureNorm::identity(6, ck0.norm.f0);
    let opts = EvalOptions { autoregressive: false, ..EvalOptions::default() };
    let r = evaluate(&ck, "same", std::slice::from_ref(&utt), &[], &opts).unwrap();
    assert_eq!(r.embedding_distance, Some(0.0));
}

#[test]
fn probe_orders_train_above_validation_after_training() {
    let pc = common::corpora(4);
    let ck = train_supervised(&pc.multi.train, &common::model(), &common::train(150), &common::features(), None).unwrap();
    let opts = EvalOptions { autoregressive: false, probe_stride: 1, ..EvalOptions::default() };
    let r = evaluate(&ck, "a", &pc.multi.validation, &pc.multi.train, &opts).unwrap();
    for (train, val) in [(r.probe_linguistic_train, r.probe_linguistic), (r.probe_acoustic_train, r.probe_acoustic)] {
        assert!(train.unwrap() + 0.02 >= val.unwrap(), "train {train:?} val {val:?}");
    }
}

fn timing(seconds: f64) -> (String, String) {
    let phones = format!("sil 0 0.3\na 0.3 1.2\ne 1.2 1.35\ni 1.35 {seconds}\n");
    let f0 = format!("0 0\n0.3 220\n1.2 247\n{seconds} 262\n");
    (phones, f0)
}

#[test]
fn two_seconds_give_401_frames() {
    let (pc, ck) = untrained();
    let inv = timbre_core::eval::checkpoint_inventory(&ck).unwrap();
    let (p, f) = timing(2.0);
    let phones = phones_from_text(&p, &inv).unwrap();
    let f0 = timbre_core::corpus::f0_from_text(&f).unwrap();
    let singer = pc.multi.train[0].singer_id;
    let a = synthesize(&ck, &phones, &f0, singer).unwrap();
    assert_eq!(a.n_frames(), 401);
    assert_eq!(a.n_bands(), 6);
    let b = synthesize(&ck, &phones, &f0, singer).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mismatched_durations_and_unknown_inputs_are_errors() {
    let (pc, ck) = untrained();
    let inv = timbre_core::eval::checkpoint_inventory(&ck).unwrap();
    let (p, _) = timing(2.0);
    let phones = phones_from_text(&p, &inv).unwrap();
    let singer = pc.multi.train[0].singer_id;
    // 1.5 frames short
    let f0 = vec![(0.0, 220.0), (2.0 - 0.0075, 220.0)];
    assert!(matches!(synthesize(&ck, &phones, &f0, singer), Err(EvalError::DurationMismatch { .. })));
    // within one frame is accepted
    let f0 = vec![(0.0, 220.0), (2.0 - 0.004, 220.0)];
    assert!(synthesize(&ck, &phones, &f0, singer).is_ok());
    assert!(matches!(synthesize(&ck, &phones, &f0, 999), Err(EvalError::UnknownSpeaker(999))));
    match phones_from_text("zz 0 1\n", &inv) {
        Err(CorpusError::UnknownPhone(s)) => assert_eq!(s, "zz"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn conversion_keeps_the_frame_count() {
    let (pc, ck) = untrained();
    let src = &pc.multi.validation[0];
    let f0: Vec<(f64, f64)> =
        src.f0.f0_hz.iter().enumerate().map(|(t, &f)| (t as f64 / 200.0, f as f64)).collect();
    let out = convert(&ck, &src.audio, &f0, src.singer_id).unwrap();
    assert_eq!(out.n_frames(), src.n_frames());
    // other sample rates are resampled first
    let half = AudioClip {
        samples: src.audio.samples.iter().step_by(2).copied().collect(),
        sample_rate: 16_000,
    };
    let out = convert(&ck, &half, &f0, src.singer_id).unwrap();
    assert!((out.n_frames() as i64 - src.n_frames() as i64).abs() <= 1);
}

#[test]
fn identity_conversion_tracks_reconstruction() {
    let pc = common::corpora(4);
    let ck = train_supervised(&pc.multi.train, &common::model(), &common::train(300), &common::features(), None).unwrap();
    let fresh = initial_checkpoint(&pc.multi.train, &common::model(), &common::train(0), &common::features()).unwrap();
    let opts = EvalOptions { probe_iterations: 1, ..EvalOptions::default() };
    let r = evaluate(&ck, "a", &pc.multi.validation, &[], &opts).unwrap();
    let r0 = evaluate(&fresh, "a0", &pc.multi.validation, &[], &opts).unwrap();
    let (vc, tf) = (r.conversion_error.unwrap(), r.teacher_forced_error.unwrap());
    assert!(vc < r0.conversion_error.unwrap(), "trained {vc} untrained {:?}", r0.conversion_error);
    assert!(vc >= tf * 0.5, "conversion {vc} vs teacher-forced {tf}");
}

#[test]
fn matrix_has_four_systems_and_a_reference() {
    let pc = common::corpora(4);
    let t = common::train(4);
    let plan = MatrixPlan {
        pretrain: t.clone(),
        baseline: t.clone(),
        adapt: t.clone(),
        clone: t,
        eval: EvalOptions { probe_iterations: 5, autoregressive: false, ..EvalOptions::default() },
        reference_iterations: 2,
    };
    let out = run_experiment_matrix(&pc, &common::model(), &plan, &common::features()).unwrap();
    let names: Vec<&str> = out.reports.iter().map(|r| r.system.as_str()).collect();
    assert_eq!(names, [&SYSTEMS[..], &["reference"]].concat());
    let find = |n: &str| &out.checkpoints.iter().find(|(s, _)| s == n).unwrap().1;
    assert!(find("supervised").params.ea.is_none());
    assert!(find("supervised-cloning").params.ea.is_none());
    assert!(find("semi-supervised").params.ea.is_some());
    let cloning = timbre_core::train::corpus_fingerprint(&pc.cloning);
    let stripped: Vec<_> = pc.cloning.iter().map(|u| u.without_labels()).collect();
    assert_eq!(find("supervised-cloning").corpus_fingerprint, cloning);
    assert_eq!(find("semi-supervised-cloning").corpus_fingerprint, timbre_core::train::corpus_fingerprint(&stripped));
    assert!(out.reports[4].autoregressive_error.unwrap() >= 0.0);

    let again = run_experiment_matrix(&pc, &common::model(), &plan, &common::features()).unwrap();
    assert_eq!(again.reports, out.reports);

    let mut missing = pc.clone();
    missing.cloning.clear();
    assert!(matches!(
        run_experiment_matrix(&missing, &common::model(), &plan, &common::features()),
        Err(EvalError::MissingComponent(_))
    ));
}

#[test]
fn untrained_probe_sits_near_chance() {
    // constant embeddings carry no information: the probe can only learn
    // the class prior
    let x = Mat::<f32>::zeros(120, 4);
    let y: Vec<usize> = (0..120).map(|t| t % 12).collect();
    let p = timbre_core::eval::LinearProbe::fit(&x, &y, 12, 100);
    assert!((p.accuracy(&x, &y) - 1.0 / 12.0).abs() < 1e-12);
}
