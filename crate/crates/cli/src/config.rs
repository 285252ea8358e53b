use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use timbre_core::corpus::CorpusConfig;
use timbre_core::dsp::FeatureConfig;
use timbre_core::eval::{EvalOptions, MatrixPlan};
use timbre_core::model::ModelConfig;
use timbre_core::train::TrainConfig;

/// Everything a run can be configured with. Missing sections take their
/// defaults; `preset` picks the model size before the `[model]` table is
/// applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub features: FeatureConfig,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub matrix: MatrixPlan,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            features: FeatureConfig::default(),
            corpus: CorpusConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            matrix: MatrixPlan::default(),
        }
    }
}

#[derive(Deserialize)]
struct Preset {
    preset: Option<String>,
}

fn preset_model(name: &str) -> Result<ModelConfig> {
    match name {
        "full" => Ok(ModelConfig::full()),
        "toy" => Ok(ModelConfig::toy()),
        "micro" => Ok(ModelConfig::micro()),
        other => anyhow::bail!("unknown model preset `{other}` (expected full, toy or micro)"),
    }
}

/// Overlays `patch` onto `base`, table by table.
fn merge(base: &mut toml::Value, patch: toml::Value) {
    match (base, patch) {
        (toml::Value::Table(b), toml::Value::Table(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let mut patch: toml::Value = toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
                let preset: Preset = patch.clone().try_into()?;
                let mut base = RunConfig::default();
                if let Some(name) = preset.preset {
                    base.model = preset_model(&name)?;
                    base.features.n_bands = base.model.n_bands;
                }
                if let toml::Value::Table(t) = &mut patch {
                    t.remove("preset");
                }
                let mut value = toml::Value::try_from(&base)?;
                merge(&mut value, patch);
                value.try_into().with_context(|| format!("invalid configuration in {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
            cfg.train.seed = s;
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        anyhow::ensure!(
            cfg.model.n_bands == cfg.features.n_bands,
            "model.n_bands = {} but features.n_bands = {}",
            cfg.model.n_bands,
            cfg.features.n_bands
        );
        Ok(cfg)
    }

    /// Writes the resolved configuration next to an output.
    pub fn snapshot(&self, out: &Path) -> Result<PathBuf> {
        let path = if out.is_dir() {
            out.join("resolved_config.toml")
        } else {
            let mut name = out.file_name().unwrap_or_default().to_os_string();
            name.push(".config.toml");
            out.with_file_name(name)
        };
        std::fs::write(&path, toml::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
