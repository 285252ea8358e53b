use serde::{Deserialize, Serialize};

use super::{evaluate, EvalError, EvalOptions, MetricReport};
use crate::corpus::ProtocolCorpora;
use crate::dsp::{griffin_lim, FeatureConfig, MelExtractor};
use crate::model::ModelConfig;
use crate::train::{adapt_decoder, clone_voice, train_supervised, AdaptOptions, Checkpoint, TrainConfig};

/// Budgets of the four compared systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixPlan {
    /// Joint training on the multi-singer set, with and without the
    /// acoustic encoder.
    pub pretrain: TrainConfig,
    /// Baseline without acoustic encoder trained on the labelled target set.
    pub baseline: TrainConfig,
    /// Decoder adaptation on target audio; `max_steps` is the budget.
    pub adapt: TrainConfig,
    /// Fine-tuning on the cloning subset; `clone_steps` is the budget.
    pub clone: TrainConfig,
    pub eval: EvalOptions,
    /// Phase-reconstruction iterations for the reference row.
    pub reference_iterations: usize,
}

impl Default for MatrixPlan {
    fn default() -> Self {
        let train = TrainConfig::default();
        MatrixPlan {
            pretrain: train.clone(),
            baseline: train.clone(),
            adapt: train.clone(),
            clone: train,
            eval: EvalOptions::default(),
            reference_iterations: 32,
        }
    }
}

pub struct MatrixOutcome {
    /// supervised, semi-supervised, supervised-cloning,
    /// semi-supervised-cloning, then the reference row.
    pub reports: Vec<MetricReport>,
    pub checkpoints: Vec<(String, Checkpoint)>,
}

pub const SYSTEMS: [&str; 4] = ["supervised", "semi-supervised", "supervised-cloning", "semi-supervised-cloning"];

/// Error of the analysis-resynthesis chain alone: each validation mel is
/// rendered to audio by phase reconstruction and analysed again.
fn reference_report(corpora: &ProtocolCorpora, features: &FeatureConfig, iterations: usize) -> Result<MetricReport, EvalError> {
    let extractor = MelExtractor::new(features)?;
    let mut report = MetricReport::empty("reference");
    let mut err = 0.0;
    for u in &corpora.target.validation {
        let audio = griffin_lim(&u.mel, features, iterations)?;
        let mel = extractor.compute(&audio)?;
        let n = mel.n_frames().min(u.n_frames());
        err += mel.values.data[..n * mel.n_bands()]
            .iter()
            .zip(&u.mel.values.data)
            .map(|(&a, &b)| ((a - b) as f64).powi(2))
            .sum::<f64>();
        report.n_frames += n;
        report.n_utterances += 1;
    }
    report.autoregressive_error = Some(err / (report.n_frames * features.n_bands) as f64);
    Ok(report)
}

/// Trains and scores the four systems on the target singer's validation
/// songs. The supervised systems have no acoustic encoder; the cloning rows
/// see only `corpora.cloning`.
pub fn run_experiment_matrix(
    corpora: &ProtocolCorpora,
    model: &ModelConfig,
    plan: &MatrixPlan,
    features: &FeatureConfig,
) -> Result<MatrixOutcome, EvalError> {
    if corpora.multi.train.is_empty() {
        return Err(EvalError::MissingComponent("multi-singer training set"));
    }
    if corpora.target.train.is_empty() {
        return Err(EvalError::MissingComponent("target training set"));
    }
    if corpora.target.validation.is_empty() {
        return Err(EvalError::MissingComponent("target validation set"));
    }
    if corpora.cloning.is_empty() {
        return Err(EvalError::MissingComponent("cloning subset"));
    }
    let semi_model = ModelConfig { acoustic_encoder: true, ..model.clone() };
    let sup_model = ModelConfig { acoustic_encoder: false, ..model.clone() };
    let target = &corpora.target;

    log::info!("training supervised baseline on the target singer");
    let supervised = train_supervised(&target.train, &sup_model, &plan.baseline, features, None)?;
    log::info!("phase A on the multi-singer set");
    let phase_a = train_supervised(&corpora.multi.train, &semi_model, &plan.pretrain, features, None)?;
    log::info!("decoder adaptation on target audio");
    let semi = adapt_decoder(
        &phase_a,
        &target.train,
        &plan.adapt,
        AdaptOptions { steps: plan.adapt.max_steps, from_scratch: false },
        None,
    )?;
    log::info!("supervised pretraining for cloning");
    let sup_base = train_supervised(&corpora.multi.train, &sup_model, &plan.pretrain, features, None)?;
    let sup_clone = clone_voice(&sup_base, &corpora.cloning, &plan.clone, true, None)?;
    let semi_clone = clone_voice(&phase_a, &corpora.cloning, &plan.clone, false, None)?;

    let checkpoints: Vec<(String, Checkpoint)> =
        SYSTEMS.iter().map(|s| s.to_string()).zip([supervised, semi, sup_clone, semi_clone]).collect();
    let mut reports = Vec::with_capacity(5);
    for (name, ck) in &checkpoints {
        log::info!("evaluating {name}");
        reports.push(evaluate(ck, name, &target.validation, &target.train, &plan.eval)?);
    }
    reports.push(reference_report(corpora, features, plan.reference_iterations)?);
    Ok(MatrixOutcome { reports, checkpoints })
}
