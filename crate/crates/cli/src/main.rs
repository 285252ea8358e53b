//! `timbre`: command-line driver for the semi-supervised timbre model.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use timbre_core::corpus::{
    build_protocol, f0_from_text, load_features, phones_from_text, save_features, PhoneInventory, Utterance,
};
use timbre_core::dsp::{compute_mel, griffin_lim, load_wav, save_wav};
use timbre_core::eval::{
    checkpoint_inventory, convert, evaluate, load_mel, plot_mel, run_experiment_matrix, save_mel, synthesize,
    PlotOptions,
};
use timbre_core::train::{
    adapt_decoder, clone_voice, initial_checkpoint, load_checkpoint, save_checkpoint, AdaptOptions, TrainError,
    Trainer,
};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "timbre", version, about = "Semi-supervised singing timbre model")]
struct Cli {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the corpus and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic multi-singer, target and cloning corpora.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the log-mel spectrogram of a WAV file.
    Features {
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint supervised training on labelled features (or resume one).
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Train the decoder on audio alone behind the frozen encoders.
    Adapt {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        /// Re-initialise the decoder first.
        #[arg(long)]
        from_scratch: bool,
    },
    /// Fine-tune on a few minutes of a new voice.
    Clone {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        /// Use the labels and the joint loss instead of audio alone.
        #[arg(long)]
        supervised: bool,
    },
    /// Synthesise a mel-spectrogram from phone timings and an F0 curve.
    Synth {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Lines of `phone start_s end_s`.
        #[arg(long)]
        phones: PathBuf,
        /// Lines of `time_s f0_hz`.
        #[arg(long)]
        f0: PathBuf,
        #[arg(long)]
        speaker: u32,
        #[arg(long)]
        out: PathBuf,
        /// Also render audio by iterative phase reconstruction.
        #[arg(long)]
        wav: Option<PathBuf>,
    },
    /// Voice conversion of a recording to another speaker.
    Convert {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        f0: PathBuf,
        #[arg(long)]
        speaker: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        wav: Option<PathBuf>,
    },
    /// Objective metrics of a checkpoint on labelled validation features.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Features the phone probes are fitted on.
        #[arg(long)]
        probe_data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and score the four compared systems on a generated corpus.
    Matrix {
        /// Directory written by `gen-corpus`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a mel container as a PNG heatmap.
    Plot {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

const SPLITS: [&str; 5] = ["multi_train", "multi_validation", "target_train", "target_validation", "cloning"];

fn inventory(cfg: &RunConfig) -> Result<PhoneInventory> {
    Ok(PhoneInventory::with_size(cfg.corpus.inventory_size)?)
}

fn read_features(path: &Path, cfg: &RunConfig) -> Result<Vec<Utterance>> {
    load_features(path, &cfg.features, &inventory(cfg)?).with_context(|| format!("loading features {}", path.display()))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(w.flush()?)
}

fn log_file(out: &Path) -> Result<BufWriter<File>> {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".log.jsonl");
    let path = out.with_file_name(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

/// Saves the last good checkpoint when training diverges.
fn finish_training(result: Result<timbre_core::train::Checkpoint, TrainError>, out: &Path) -> Result<()> {
    match result {
        Ok(ck) => {
            save_checkpoint(&ck, out)?;
            println!("wrote {} (step {})", out.display(), ck.step);
            Ok(())
        }
        Err(TrainError::Diverged { step, checkpoint }) => {
            let mut name = out.file_name().unwrap_or_default().to_os_string();
            name.push(".diverged");
            let path = out.with_file_name(name);
            save_checkpoint(&checkpoint, &path)?;
            bail!("loss diverged at step {step}; last good state saved to {}", path.display())
        }
        Err(e) => Err(e.into()),
    }
}

fn read_f0(path: &Path) -> Result<Vec<(f64, f64)>> {
    ensure!(path.exists(), "F0 file {} not found", path.display());
    Ok(f0_from_text(&std::fs::read_to_string(path)?).with_context(|| format!("parsing {}", path.display()))?)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::GenCorpus { out } => {
            std::fs::create_dir_all(&out)?;
            let extractor = timbre_core::dsp::MelExtractor::new(&cfg.features)?;
            let pc = build_protocol(&cfg.corpus, cfg.seed, &extractor)?;
            let sets = [&pc.multi.train, &pc.multi.validation, &pc.target.train, &pc.target.validation, &pc.cloning];
            for (name, utts) in SPLITS.iter().zip(sets) {
                save_features(utts, out.join(format!("{name}.feat")), &cfg.features, &pc.inventory)?;
                println!("{name}: {} utterances", utts.len());
            }
            cfg.snapshot(&out)?;
        }
        Command::Features { wav, out } => {
            let clip = load_wav(&wav)?;
            ensure!(
                clip.sample_rate == cfg.features.sample_rate,
                "{} is sampled at {} Hz, features expect {} Hz",
                wav.display(),
                clip.sample_rate,
                cfg.features.sample_rate
            );
            let mel = compute_mel(&clip, &cfg.features)?;
            save_mel(&mel, &cfg.features, &out)?;
            cfg.snapshot(&out)?;
            println!("wrote {} ({} frames)", out.display(), mel.n_frames());
        }
        Command::Train { data, out, checkpoint, steps } => {
            let utts = read_features(&data, &cfg)?;
            let ck = match checkpoint {
                Some(p) => load_checkpoint(&p, None)?,
                None => initial_checkpoint(&utts, &cfg.model, &cfg.train, &cfg.features)?,
            };
            let until = steps.unwrap_or(ck.train.max_steps);
            cfg.snapshot(&out)?;
            let mut log = log_file(&out)?;
            let mut trainer = Trainer::new(ck, &utts)?;
            let result = trainer.run(until, Some(&mut log)).map(|_| trainer.into_checkpoint());
            finish_training(result, &out)?;
        }
        Command::Adapt { checkpoint, data, out, steps, from_scratch } => {
            let base = load_checkpoint(&checkpoint, None)?;
            let utts = read_features(&data, &cfg)?;
            let options = AdaptOptions { steps: steps.unwrap_or(cfg.train.max_steps), from_scratch };
            cfg.snapshot(&out)?;
            let mut log = log_file(&out)?;
            finish_training(adapt_decoder(&base, &utts, &cfg.train, options, Some(&mut log)), &out)?;
        }
        Command::Clone { checkpoint, data, out, steps, supervised } => {
            let base = load_checkpoint(&checkpoint, None)?;
            let utts = read_features(&data, &cfg)?;
            let mut train = cfg.train.clone();
            if let Some(s) = steps {
                train.clone_steps = s;
            }
            cfg.snapshot(&out)?;
            let mut log = log_file(&out)?;
            finish_training(clone_voice(&base, &utts, &train, supervised, Some(&mut log)), &out)?;
        }
        Command::Synth { checkpoint, phones, f0, speaker, out, wav } => {
            let ck = load_checkpoint(&checkpoint, None)?;
            let inv = checkpoint_inventory(&ck)?;
            let text = std::fs::read_to_string(&phones).with_context(|| format!("reading {}", phones.display()))?;
            let intervals = phones_from_text(&text, &inv)?;
            let mel = synthesize(&ck, &intervals, &read_f0(&f0)?, speaker)?;
            save_mel(&mel, &ck.features, &out)?;
            if let Some(w) = wav {
                save_wav(&griffin_lim(&mel, &ck.features, 32)?, &w)?;
            }
            cfg.snapshot(&out)?;
            println!("wrote {} ({} frames)", out.display(), mel.n_frames());
        }
        Command::Convert { checkpoint, source, f0, speaker, out, wav } => {
            let ck = load_checkpoint(&checkpoint, None)?;
            let f0 = read_f0(&f0)?;
            let clip = load_wav(&source)?;
            let mel = convert(&ck, &clip, &f0, speaker)?;
            save_mel(&mel, &ck.features, &out)?;
            if let Some(w) = wav {
                save_wav(&griffin_lim(&mel, &ck.features, 32)?, &w)?;
            }
            cfg.snapshot(&out)?;
            println!("wrote {} ({} frames)", out.display(), mel.n_frames());
        }
        Command::Eval { checkpoint, data, probe_data, out } => {
            let ck = load_checkpoint(&checkpoint, None)?;
            let validation = read_features(&data, &cfg)?;
            let probe = match probe_data {
                Some(p) => read_features(&p, &cfg)?,
                None => Vec::new(),
            };
            let name = checkpoint.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let report = evaluate(&ck, &name, &validation, &probe, &cfg.eval)?;
            write_jsonl(&out, &[&report])?;
            cfg.snapshot(&out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Matrix { data, out } => {
            std::fs::create_dir_all(&out)?;
            let mut sets = Vec::new();
            for name in SPLITS {
                let path = data.join(format!("{name}.feat"));
                ensure!(path.exists(), "missing corpus component {}", path.display());
                sets.push(read_features(&path, &cfg)?);
            }
            let mut it = sets.into_iter();
            let mut next = || it.next().unwrap_or_default();
            let multi = timbre_core::corpus::Corpus { singers: Vec::new(), train: next(), validation: next() };
            let target = timbre_core::corpus::Corpus { singers: Vec::new(), train: next(), validation: next() };
            let corpora = timbre_core::corpus::ProtocolCorpora { inventory: inventory(&cfg)?, multi, target, cloning: next() };
            cfg.snapshot(&out)?;
            let outcome = run_experiment_matrix(&corpora, &cfg.model, &cfg.matrix, &cfg.features)?;
            for (name, ck) in &outcome.checkpoints {
                save_checkpoint(ck, out.join(format!("{name}.ckpt")))?;
            }
            write_jsonl(&out.join("reports.jsonl"), &outcome.reports)?;
            for r in &outcome.reports {
                println!("{}", serde_json::to_string(r)?);
            }
        }
        Command::Plot { input, out } => {
            let (mel, features) = load_mel(&input).with_context(|| format!("reading {}", input.display()))?;
            plot_mel(&mel, features.frame_rate(), &PlotOptions::default(), &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
