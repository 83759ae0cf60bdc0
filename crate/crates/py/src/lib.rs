//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use distnet::eval::{rmse_metric, smape_metric, DEFAULT_EPSILON};
use distnet::features::{
    DatasetManifest, FeatureOptions, FeatureSet, Pollutant, RawDataset, SampleWindow,
};
use distnet::grid::fill_series;
use distnet::models::{Forecaster as CoreForecaster, ModelKind};
use distnet::synth::scenario_presets;
use distnet::Error;
use distnet_cli::commands::{self, EvaluateArgs, Split, SynthArgs};
use distnet_cli::config::RunConfig;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Training(_) | Error::NonFinite { .. } => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    match v {
        Value::Null => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_bound_py_any(py),
            (_, Some(u)) => u.into_bound_py_any(py),
            _ => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py),
        },
        Value::String(s) => s.into_bound_py_any(py),
        Value::Array(xs) => {
            let items = xs
                .iter()
                .map(|x| to_py(py, x))
                .collect::<PyResult<Vec<_>>>()?;
            Ok(PyList::new(py, items)?.into_any())
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            Ok(d.into_any())
        }
    }
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(x).map_err(|e| py_err(e.into()))?;
    to_py(py, &v)
}

fn load_dataset(manifest: &Path) -> distnet::Result<(DatasetManifest, RawDataset)> {
    let m = DatasetManifest::load(manifest)?;
    let ds = m.load_dataset(manifest.parent().unwrap_or(Path::new("")))?;
    Ok((m, ds))
}

fn pollutant(s: &str) -> PyResult<Pollutant> {
    s.parse().map_err(py_err)
}

/// Names of the synthetic scenarios.
#[pyfunction]
fn presets() -> Vec<String> {
    scenario_presets().keys().map(|k| k.to_string()).collect()
}

/// Names accepted as model kinds.
#[pyfunction]
fn model_kinds() -> Vec<&'static str> {
    ModelKind::ALL.iter().map(|k| k.as_str()).collect()
}

/// Writes a synthetic dataset and returns the path of its manifest.
#[pyfunction]
#[pyo3(signature = (out, preset="tiny", seed=0, hours=None, stations=None))]
fn synth(
    out: PathBuf,
    preset: &str,
    seed: u64,
    hours: Option<usize>,
    stations: Option<usize>,
) -> PyResult<PathBuf> {
    commands::synth(&SynthArgs {
        preset: preset.to_string(),
        seed,
        hours,
        stations,
        out: out.clone(),
    })
    .map_err(py_err)?;
    Ok(out.join("manifest.json"))
}

#[pyfunction]
#[pyo3(signature = (preds, truths, epsilon=DEFAULT_EPSILON))]
fn smape(preds: Vec<f64>, truths: Vec<f64>, epsilon: f64) -> PyResult<f64> {
    smape_metric(&preds, &truths, epsilon).map_err(py_err)
}

#[pyfunction]
fn rmse(preds: Vec<f64>, truths: Vec<f64>) -> PyResult<f64> {
    rmse_metric(&preds, &truths).map_err(py_err)
}

/// Gridded readings as `[hours][rows][cols]`.
#[pyfunction]
#[pyo3(signature = (manifest, hour, hours=1, pollutant_name="pm25"))]
fn interpolate(
    manifest: PathBuf,
    hour: usize,
    hours: usize,
    pollutant_name: &str,
) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let p = pollutant(pollutant_name)?;
    let (_, ds) = load_dataset(&manifest).map_err(py_err)?;
    if hours == 0 || hour + hours > ds.hours {
        return Err(PyValueError::new_err(format!(
            "hours {hour}..{} outside the {} hours of data",
            hour + hours,
            ds.hours
        )));
    }
    let readings: Vec<_> = (hour..hour + hours).map(|h| ds.readings_at(h, p)).collect();
    let field = fill_series(&readings, &ds.stations, &ds.grid).map_err(py_err)?;
    let cols = ds.grid.cols;
    Ok(field
        .data()
        .chunks(ds.grid.cells())
        .map(|frame| frame.chunks(cols).map(<[f64]>::to_vec).collect())
        .collect())
}

fn run_config(config: &str) -> PyResult<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(config)
        .map_err(|e| PyValueError::new_err(format!("run config: {e}")))?;
    cfg.resolve().map_err(py_err)
}

/// Trains from a JSON run config and returns the checkpoint path.
#[pyfunction]
fn train(config: &str, out: PathBuf) -> PyResult<PathBuf> {
    let cfg = run_config(config)?;
    commands::train_cmd(&cfg, &out).map_err(py_err)
}

/// Scores a checkpoint, writes the report into `out` and returns the metrics.
#[pyfunction]
#[pyo3(signature = (checkpoint, manifest, out, split="test", epsilon=DEFAULT_EPSILON))]
fn evaluate<'py>(
    py: Python<'py>,
    checkpoint: PathBuf,
    manifest: PathBuf,
    out: PathBuf,
    split: &str,
    epsilon: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let split = match split {
        "train" => Split::Train,
        "validation" => Split::Validation,
        "test" => Split::Test,
        s => return Err(PyValueError::new_err(format!("unknown split {s}"))),
    };
    let result = commands::evaluate(&EvaluateArgs {
        checkpoint,
        manifest,
        out,
        split,
        epsilon,
        validation_fraction: 0.1,
    })
    .map_err(py_err)?;
    json_to_py(py, &result)
}

/// Runs an encoder-length sweep and returns the path of `sweep.csv`.
#[pyfunction]
fn sweep(config: &str, lengths: Vec<usize>, out: PathBuf) -> PyResult<PathBuf> {
    let cfg = run_config(config)?;
    commands::sweep(&cfg, &lengths, &out).map_err(py_err)
}

/// A trained model loaded from a checkpoint.
#[pyclass(module = "distnet")]
struct Forecaster {
    inner: CoreForecaster,
}

#[pymethods]
impl Forecaster {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreForecaster::load(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn pollutant(&self) -> &'static str {
        self.inner.pollutant.as_str()
    }

    #[getter]
    fn encoder_len(&self) -> usize {
        self.inner.config.encoder_len
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.config.horizon
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.params.numel()
    }

    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner.config)
    }

    /// Forecasts for every station, keyed by station id, whose first step is
    /// hour `origin` (default: the hour after the training cutoff).
    #[pyo3(signature = (manifest, origin=None))]
    fn predict(
        &self,
        manifest: PathBuf,
        origin: Option<usize>,
    ) -> PyResult<Vec<(String, Vec<f64>)>> {
        let m = &self.inner;
        let (man, ds) = load_dataset(&manifest).map_err(py_err)?;
        let cutoff = ds.cutoff_hour(man.train_cutoff).map_err(py_err)?;
        let data = Arc::new(
            FeatureSet::build_frozen(
                &ds,
                m.pollutant,
                cutoff,
                FeatureOptions::default(),
                &m.normalization,
            )
            .map_err(py_err)?,
        );
        let t = m.config.encoder_len;
        let origin = origin.unwrap_or((cutoff + 1).min(data.hours));
        if origin < t || origin > data.hours {
            return Err(PyValueError::new_err(format!(
                "origin hour {origin} needs {t} encoder hours within {} hours of data",
                data.hours
            )));
        }
        let windows: Vec<SampleWindow> = (0..data.stations.len())
            .map(|station| SampleWindow {
                data: Arc::clone(&data),
                station,
                start: origin - t,
                encoder_len: t,
                horizon: m.config.horizon,
            })
            .collect();
        let preds = m.predict(&windows).map_err(py_err)?;
        Ok(windows
            .iter()
            .map(|w| w.station_id().to_string())
            .zip(preds)
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Forecaster(kind={}, pollutant={}, T={}, tau={})",
            self.kind(),
            self.pollutant(),
            self.encoder_len(),
            self.horizon()
        )
    }
}

#[pymodule]
#[pyo3(name = "distnet")]
fn distnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(model_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(smape, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(interpolate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_class::<Forecaster>()?;
    Ok(())
}
