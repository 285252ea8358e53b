use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use timbre_core::corpus::{f0_from_text, phones_from_text};
use timbre_core::dsp::{compute_mel, AudioClip, FeatureConfig};
use timbre_core::eval::{checkpoint_inventory, synthesize as synthesize_mel};
use timbre_core::model::ModelConfig;
use timbre_core::train::{load_checkpoint, lr_schedule as schedule, TrainConfig};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn preset(name: &str) -> PyResult<ModelConfig> {
    match name {
        "full" => Ok(ModelConfig::full()),
        "toy" => Ok(ModelConfig::toy()),
        "micro" => Ok(ModelConfig::micro()),
        other => Err(err(format!("unknown preset `{other}`"))),
    }
}

fn rows(m: &timbre_core::tensor::Mat<f32>) -> Vec<Vec<f32>> {
    (0..m.rows).map(|t| m.row(t).to_vec()).collect()
}

/// Receptive fields (in frames) of a model preset.
#[pyfunction]
#[pyo3(signature = (name = "full"))]
fn receptive_fields<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyDict>> {
    let c = preset(name)?;
    let d = PyDict::new(py);
    d.set_item("d2", c.d2_field().total())?;
    d.set_item("encoder", c.encoder_field().total())?;
    d.set_item("d1", c.d1_field().total())?;
    let ctx = c.segment_context();
    d.set_item("context_left", ctx.left)?;
    d.set_item("context_right", ctx.right)?;
    Ok(d)
}

/// Learning rate before update `step` under the default schedule.
#[pyfunction]
fn lr_schedule(step: u64) -> f64 {
    schedule(step, &TrainConfig::default())
}

/// Log-mel spectrogram `[frames][bands]` with the default analysis settings.
#[pyfunction]
fn log_mel(samples: Vec<f32>, sample_rate: u32) -> PyResult<Vec<Vec<f32>>> {
    let config = FeatureConfig { sample_rate, ..FeatureConfig::default() };
    let clip = AudioClip::new(samples, sample_rate).map_err(err)?;
    Ok(rows(&compute_mel(&clip, &config).map_err(err)?.values))
}

/// Mel-spectrogram predicted by a checkpoint from phone timings
/// (`phone start end` lines) and an F0 curve (`time f0` lines).
#[pyfunction]
fn synthesize(checkpoint: &str, phones: &str, f0: &str, speaker: u32) -> PyResult<Vec<Vec<f32>>> {
    let ck = load_checkpoint(checkpoint, None).map_err(err)?;
    let inv = checkpoint_inventory(&ck).map_err(err)?;
    let intervals = phones_from_text(phones, &inv).map_err(err)?;
    let points = f0_from_text(f0).map_err(err)?;
    Ok(rows(&synthesize_mel(&ck, &intervals, &points, speaker).map_err(err)?.values))
}

#[pymodule]
fn timbre(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(receptive_fields, m)?)?;
    m.add_function(wrap_pyfunction!(lr_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(log_mel, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
