//! Python bindings: the pipeline subcommands plus the individual building
//! blocks (WAV IO, spectrograms, similarity statistics, PCA, and a loaded
//! encoder) exposed as plain functions and one `Model` class.
//!
//! Build with `cargo build -p cawe-py --release` and import the produced
//! `libcawe_py.so` as `cawe_py` (see `python/smoke_test.py`).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cawe::config::PipelineConfig;
use cawe::corpus::AudioClip;
use cawe::dsp::Spectrogram;
use cawe::model::{spectrogram_to_tensor, CaeModel};
use cawe::nn::DropoutMode;

fn to_py_err(err: cawe::Error) -> PyErr {
    match err.exit_code() {
        2 => PyValueError::new_err(err.to_string()),
        4 => PyArithmeticError::new_err(err.to_string()),
        _ => PyIOError::new_err(err.to_string()),
    }
}

/// Read a mono 16-bit PCM WAV file; returns (samples in [-1, 1], rate).
#[pyfunction]
fn read_wav(path: PathBuf) -> PyResult<(Vec<f32>, u32)> {
    let clip = cawe::corpus::read_wav(&path).map_err(to_py_err)?;
    Ok((clip.samples, clip.sample_rate_hz))
}

/// Raw magnitude spectrogram of a clip; returns (row-major values, bins,
/// frames).
#[pyfunction]
#[pyo3(signature = (samples, sample_rate_hz, n_fft=256, hop=128))]
fn stft_magnitude(
    samples: Vec<f32>,
    sample_rate_hz: u32,
    n_fft: usize,
    hop: usize,
) -> PyResult<(Vec<f32>, usize, usize)> {
    let clip = AudioClip { samples, sample_rate_hz };
    let spec = cawe::dsp::stft_magnitude(&clip, n_fft, hop).map_err(to_py_err)?;
    Ok((spec.values, spec.l1, spec.l2))
}

#[pyfunction]
fn cosine(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    cawe::eval::cosine(&u, &v).map_err(to_py_err)
}

#[pyfunction]
fn spearman(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<f64> {
    cawe::eval::spearman(&xs, &ys).map_err(to_py_err)
}

/// Fit a k-component PCA and return the projected coordinates.
#[pyfunction]
fn pca_fit_transform(rows: Vec<Vec<f64>>, k: usize) -> PyResult<Vec<Vec<f64>>> {
    let model = cawe::projection::pca_fit(&rows, k).map_err(to_py_err)?;
    cawe::projection::pca_transform(&model, &rows).map_err(to_py_err)
}

/// Load a text embedding table as a dict of word -> vector.
#[pyfunction]
fn load_embeddings(path: PathBuf) -> PyResult<HashMap<String, Vec<f64>>> {
    let table = cawe::embeddings::import_text(&path).map_err(to_py_err)?;
    Ok(table.entries.into_iter().collect())
}

/// Generate a small synthetic tone-language corpus (WAV + alignment JSON)
/// under `audio_dir` / `alignment_dir`.
#[pyfunction]
#[pyo3(signature = (audio_dir, alignment_dir, sentences=20, seed=42))]
fn write_demo_corpus(
    audio_dir: PathBuf,
    alignment_dir: PathBuf,
    sentences: usize,
    seed: u64,
) -> PyResult<()> {
    let cfg = cawe::synth::SynthConfig { sentences, seed, ..Default::default() };
    cawe::synth::write_corpus_files(&cfg, &audio_dir, &alignment_dir).map_err(to_py_err)
}

/// Run one pipeline subcommand (ingest, train, embed, eval, project,
/// inspect) against a JSON config file.
#[pyfunction]
#[pyo3(signature = (command, config, seed=None, quiet=true))]
fn run(command: &str, config: PathBuf, seed: Option<u64>, quiet: bool) -> PyResult<()> {
    let mut cfg = PipelineConfig::load(&config).map_err(to_py_err)?;
    if let Some(seed) = seed {
        cfg.override_seed(seed);
    }
    cawe::cli::run(command, &cfg, quiet).map_err(to_py_err)
}

/// A trained encoder loaded from a checkpoint.
#[pyclass]
struct Model {
    inner: CaeModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Model> {
        Ok(Model { inner: cawe::checkpoint::load_checkpoint(Path::new(&path)).map_err(to_py_err)? })
    }

    #[getter]
    fn embedding_dim(&self) -> usize {
        self.inner.cfg.embedding_dim
    }

    #[getter]
    fn input_shape(&self) -> (usize, usize) {
        (self.inner.cfg.input_h, self.inner.cfg.input_w)
    }

    /// Embed one normalized spectrogram (row-major values, bins x frames).
    fn embed(&self, values: Vec<f32>, l1: usize, l2: usize) -> PyResult<Vec<f64>> {
        if values.len() != l1 * l2 {
            return Err(PyValueError::new_err(format!(
                "expected {} values for a {l1}x{l2} spectrogram, got {}",
                l1 * l2,
                values.len()
            )));
        }
        let spec = Spectrogram { values, l1, l2 };
        let x = spectrogram_to_tensor(&spec)
            .reshape(&[1, 1, l1, l2])
            .map_err(to_py_err)?;
        let h = self
            .inner
            .encode(&x, DropoutMode::Eval)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(h.data().to_vec())
    }
}

#[pymodule]
fn cawe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(read_wav, m)?)?;
    m.add_function(wrap_pyfunction!(stft_magnitude, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(pca_fit_transform, m)?)?;
    m.add_function(wrap_pyfunction!(load_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(write_demo_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
