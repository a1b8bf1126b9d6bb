//! Python bindings: descriptor generation, single-descriptor evaluation,
//! batch runs and the directional check, with records returned as dicts.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use firmrisk::descriptors::{self, ExposureLevel, FirmwareDescriptor, Generator};
use firmrisk::experiments::record::COLUMNS;
use firmrisk::experiments::{directional_check as check, run_records, Pipeline, RiskRecord, RunOptions, Variant};
use firmrisk::params::{ParamsFile, BUNDLED_NAME};
use firmrisk::{alignment, backends::Backend, stats};

fn err(e: firmrisk::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn record_dict<'py>(py: Python<'py>, r: &RiskRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in COLUMNS.iter().zip(r.to_fields()) {
        if v.is_empty() {
            d.set_item(k, py.None())?;
        } else if let Ok(x) = v.parse::<f64>() {
            d.set_item(k, x)?;
        } else {
            d.set_item(k, v)?;
        }
    }
    Ok(d)
}

fn parse_all<T: std::str::FromStr<Err = firmrisk::Error>>(xs: &[String]) -> PyResult<Vec<T>> {
    xs.iter().map(|s| s.parse().map_err(err)).collect()
}

/// JSON text of the bundled router descriptor.
#[pyfunction]
fn example_router() -> String {
    descriptors::example_router().to_json()
}

/// `n` synthetic descriptors as JSON strings.
#[pyfunction]
#[pyo3(signature = (n, seed = 42, params = BUNDLED_NAME))]
fn generate(n: usize, seed: u64, params: &str) -> PyResult<Vec<String>> {
    let p = ParamsFile::load(params).map_err(err)?;
    let g = Generator::new(p.population.generator(n, seed)).map_err(err)?;
    Ok(g.generate().iter().map(FirmwareDescriptor::to_json).collect())
}

/// Full record of one unperturbed descriptor.
#[pyfunction]
#[pyo3(signature = (descriptor, params = BUNDLED_NAME))]
fn evaluate<'py>(py: Python<'py>, descriptor: &str, params: &str) -> PyResult<Bound<'py, PyDict>> {
    let f = FirmwareDescriptor::from_json(descriptor).map_err(err)?;
    let pl = Pipeline::new(ParamsFile::load(params).map_err(err)?);
    record_dict(py, &pl.evaluate(&f).map_err(err)?)
}

/// Records of every descriptor at every level and variant, synthetic backend.
#[pyfunction]
#[pyo3(signature = (descriptors, levels = vec!["medium".into(), "high".into()], variants = vec!["full".into()], params = BUNDLED_NAME, seed = 42, workers = 0))]
fn run<'py>(
    py: Python<'py>,
    descriptors: Vec<String>,
    levels: Vec<String>,
    variants: Vec<String>,
    params: &str,
    seed: u64,
    workers: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let ds = descriptors
        .iter()
        .map(|s| FirmwareDescriptor::from_json(s).map_err(err))
        .collect::<PyResult<Vec<_>>>()?;
    let opts = RunOptions {
        levels: parse_all::<ExposureLevel>(&levels)?,
        variants: parse_all::<Variant>(&variants)?,
        seed,
        workers,
        ..RunOptions::default()
    };
    let pl = Pipeline::new(ParamsFile::load(params).map_err(err)?);
    let recs = py
        .detach(|| run_records(&pl, &ds, &Backend::Synthetic, &opts))
        .map_err(err)?;
    recs.iter().map(|r| record_dict(py, r)).collect()
}

/// Exposure, correlation and ablation findings on a generated population.
#[pyfunction]
#[pyo3(signature = (n = 1000, seed = 42, params = BUNDLED_NAME, workers = 0))]
fn directional_check<'py>(py: Python<'py>, n: usize, seed: u64, params: &str, workers: usize) -> PyResult<Bound<'py, PyAny>> {
    let p = ParamsFile::load(params).map_err(err)?;
    let c = py.detach(|| check(&p, n, seed, workers)).map_err(err)?;
    let holds = c.holds();
    let text = serde_json::to_string(&c).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let d = py.import("json")?.call_method1("loads", (text,))?;
    d.set_item("holds", holds)?;
    Ok(d)
}

/// `D = KL(h1‖h3) + KL(h2‖h3)` after normalization.
#[pyfunction]
fn divergence(h1: Vec<f64>, h2: Vec<f64>, h3: Vec<f64>) -> PyResult<f64> {
    Ok(alignment::divergence(&h1, &h2, &h3).map_err(err)?.total)
}

/// `(t, df, p)` of Welch's test; positive `t` when `y` has the larger mean.
#[pyfunction]
fn welch_t(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let t = stats::welch_t(&x, &y).map_err(err)?;
    Ok((t.statistic, t.df, t.p_value))
}

/// `(r, p)` with a Fisher z p-value.
#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
    let t = stats::pearson(&x, &y).map_err(err)?;
    Ok((t.statistic, t.p_value))
}

#[pymodule]
fn firmrisk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("BUNDLED_PARAMS", BUNDLED_NAME)?;
    m.add_function(wrap_pyfunction!(example_router, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(directional_check, m)?)?;
    m.add_function(wrap_pyfunction!(divergence, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    Ok(())
}
