//! Python bindings. Build the cdylib and import it as `kan_dfm`.
//!
//! Records cross the boundary as plain lists of floats in schema order, or
//! as `{name: value}` dicts for single designs. Reports come back as dicts.

use std::collections::BTreeMap;

use kan_dfm::datagen::{self, GenConfig};
use kan_dfm::interpret;
use kan_dfm::kan;
use kan_dfm::rules::{self, RuleSet};
use kan_dfm::schema::{DesignRecord, ScenarioId, ScenarioSchema};
use kan_dfm::trainer::{self, OptimizerKind, TrainConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

fn err(e: kan_dfm::Error) -> PyErr {
    match e {
        kan_dfm::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn scenario(name: &str) -> PyResult<ScenarioId> {
    name.parse().map_err(|e: kan_dfm::Error| PyValueError::new_err(e.to_string()))
}

fn record_from_params(id: ScenarioId, params: &BTreeMap<String, f64>) -> PyResult<DesignRecord> {
    let schema = ScenarioSchema::for_scenario(id);
    DesignRecord::from_params(&schema, params).map_err(|errs| {
        let msg: Vec<String> = errs.iter().map(|e| format!("{}: {}", e.field, e.message)).collect();
        PyValueError::new_err(msg.join("; "))
    })
}

fn records(id: ScenarioId, xs: Vec<Vec<f64>>, ys: Option<Vec<u8>>) -> PyResult<Vec<DesignRecord>> {
    if let Some(ys) = &ys {
        if ys.len() != xs.len() {
            return Err(PyValueError::new_err(format!("{} rows but {} labels", xs.len(), ys.len())));
        }
    }
    let schema = ScenarioSchema::for_scenario(id);
    xs.into_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut r = DesignRecord::new(id, x);
            r.check_schema(&schema).map_err(err)?;
            if let Some(ys) = &ys {
                r = r.with_label(ys[i]);
            }
            Ok(r)
        })
        .collect()
}

fn split(recs: Vec<DesignRecord>) -> (Vec<Vec<f64>>, Vec<Option<u8>>) {
    recs.into_iter().map(|r| (r.values, r.label)).unzip()
}

/// Scenario identifiers.
#[pyfunction]
fn scenarios() -> Vec<&'static str> {
    ScenarioId::ALL.iter().map(|s| s.as_str()).collect()
}

/// Feature names of a scenario in column order.
#[pyfunction]
fn feature_names(scenario_id: &str) -> PyResult<Vec<String>> {
    Ok(ScenarioSchema::for_scenario(scenario(scenario_id)?).names())
}

/// Generates a labeled dataset. Returns `(X, y, manifest)`.
#[pyfunction]
#[pyo3(signature = (scenario_id, n, seed=0, boundary_fraction=0.5, balance=true, rules_path=None))]
fn generate<'py>(
    py: Python<'py>,
    scenario_id: &str,
    n: usize,
    seed: u64,
    boundary_fraction: f64,
    balance: bool,
    rules_path: Option<&str>,
) -> PyResult<(Vec<Vec<f64>>, Vec<u8>, Bound<'py, PyAny>)> {
    let engine = load_engine(rules_path)?;
    let cfg = GenConfig { boundary_fraction, balance, ..GenConfig::new(scenario(scenario_id)?, n, seed) };
    let (recs, manifest) = py.detach(|| datagen::generate_dataset(&engine, &cfg)).map_err(err)?;
    let (xs, ys) = split(recs);
    Ok((xs, ys.into_iter().map(|y| y.unwrap_or(0)).collect(), to_py(py, &manifest)?))
}

/// Reads a dataset CSV. Returns `(scenario_id, X, y)`; `y` is None for unlabeled files.
#[pyfunction]
fn load_csv(path: &str) -> PyResult<(String, Vec<Vec<f64>>, Option<Vec<u8>>)> {
    let (id, recs) = datagen::load_csv(path).map_err(err)?;
    let (xs, ys) = split(recs);
    let ys: Option<Vec<u8>> = ys.into_iter().collect();
    Ok((id.to_string(), xs, ys))
}

/// Writes a dataset CSV in the same format the CLI produces.
#[pyfunction]
#[pyo3(signature = (path, scenario_id, x, y=None))]
fn save_csv(path: &str, scenario_id: &str, x: Vec<Vec<f64>>, y: Option<Vec<u8>>) -> PyResult<()> {
    let id = scenario(scenario_id)?;
    datagen::save_csv(&records(id, x, y)?, id, path).map_err(err)
}

fn load_engine(path: Option<&str>) -> PyResult<rules::RuleEngine> {
    let set = match path {
        Some(p) => RuleSet::load(p).map_err(err)?,
        None => RuleSet::standard(),
    };
    Ok(rules::RuleEngine::new(set))
}

/// Deterministic labeling rules.
#[pyclass(name = "RuleEngine", frozen)]
struct PyRuleEngine {
    inner: rules::RuleEngine,
}

#[pymethods]
impl PyRuleEngine {
    #[new]
    #[pyo3(signature = (path=None))]
    fn new(path: Option<&str>) -> PyResult<Self> {
        Ok(PyRuleEngine { inner: load_engine(path)? })
    }

    #[getter]
    fn rule_hash(&self) -> &str {
        self.inner.rule_hash()
    }

    /// Checks one design given as `{name: value}`.
    fn check<'py>(&self, py: Python<'py>, scenario_id: &str, params: BTreeMap<String, f64>) -> PyResult<Bound<'py, PyAny>> {
        let r = record_from_params(scenario(scenario_id)?, &params)?;
        to_py(py, &self.inner.check(&r).map_err(err)?)
    }
}

/// A trained classifier.
#[pyclass(name = "KanModel", frozen)]
struct PyKanModel {
    inner: kan::KanModel,
}

impl PyKanModel {
    fn record(&self, params: &BTreeMap<String, f64>) -> PyResult<DesignRecord> {
        record_from_params(self.inner.scenario_id, params)
    }
}

#[pymethods]
impl PyKanModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyKanModel { inner: kan::KanModel::load(path).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyKanModel { inner: kan::KanModel::from_json(text).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn scenario_id(&self) -> &'static str {
        self.inner.scenario_id.as_str()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold_tau
    }

    #[getter]
    fn widths(&self) -> Vec<usize> {
        self.inner.widths()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    /// Probability of manufacturable for one `{name: value}` design.
    fn predict(&self, params: BTreeMap<String, f64>) -> PyResult<f64> {
        self.inner.predict_proba(&self.record(&params)?).map_err(err)
    }

    /// Hard label at the model threshold.
    fn classify(&self, params: BTreeMap<String, f64>) -> PyResult<u8> {
        Ok(kan::classify(self.predict(params)?, self.inner.threshold_tau))
    }

    /// Probabilities for rows in schema order.
    fn predict_batch(&self, py: Python<'_>, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let recs = records(self.inner.scenario_id, x, None)?;
        py.detach(|| self.inner.predict_records(&recs)).map_err(err)
    }

    /// Metrics report on labeled rows.
    fn evaluate<'py>(&self, py: Python<'py>, x: Vec<Vec<f64>>, y: Vec<u8>) -> PyResult<Bound<'py, PyAny>> {
        let recs = records(self.inner.scenario_id, x, Some(y))?;
        let report = py.detach(|| trainer::evaluate_model(&self.inner, &recs)).map_err(err)?;
        to_py(py, &report)
    }

    /// Shapley attribution of one design against background rows.
    #[pyo3(signature = (params, background, budget=None, seed=0))]
    fn explain<'py>(
        &self,
        py: Python<'py>,
        params: BTreeMap<String, f64>,
        background: Vec<Vec<f64>>,
        budget: Option<usize>,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let x = self.record(&params)?;
        let bg = records(self.inner.scenario_id, background, None)?;
        let budget = budget.unwrap_or(200 * self.inner.n_inputs());
        let report = py.detach(|| interpret::shapley_attribution(&self.inner, &x, &bg, budget, seed)).map_err(err)?;
        to_py(py, &report)
    }

    /// Sampled edge functions of every layer.
    #[pyo3(signature = (points=101))]
    fn splines<'py>(&self, py: Python<'py>, points: usize) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &interpret::export_splines(&self.inner, points).map_err(err)?)
    }

    /// Two-unit latent coordinates for rows in schema order.
    #[pyo3(signature = (x, y=None))]
    fn latent<'py>(&self, py: Python<'py>, x: Vec<Vec<f64>>, y: Option<Vec<u8>>) -> PyResult<Bound<'py, PyAny>> {
        let recs = records(self.inner.scenario_id, x, y)?;
        to_py(py, &interpret::export_latent(&self.inner, &recs).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("KanModel(scenario_id={:?}, widths={:?})", self.inner.scenario_id.as_str(), self.inner.widths())
    }
}

/// Trains a model with a stratified hold-out split. Returns `(model, test_report)`.
#[pyfunction]
#[pyo3(signature = (scenario_id, x, y, hidden=None, grid=3, k=3, optimizer="lbfgs", max_steps=None, lambda_=1e-4, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    scenario_id: &str,
    x: Vec<Vec<f64>>,
    y: Vec<u8>,
    hidden: Option<Vec<usize>>,
    grid: usize,
    k: usize,
    optimizer: &str,
    max_steps: Option<usize>,
    lambda_: f64,
    seed: u64,
) -> PyResult<(PyKanModel, Bound<'py, PyAny>)> {
    let opt: OptimizerKind = optimizer.parse().map_err(|e: kan_dfm::Error| PyValueError::new_err(e.to_string()))?;
    let base = match opt {
        OptimizerKind::Adam => TrainConfig::adam(),
        OptimizerKind::Lbfgs => TrainConfig::default(),
    };
    let cfg = TrainConfig {
        hidden: hidden.unwrap_or(base.hidden.clone()),
        grid,
        order_k: k,
        max_steps: max_steps.unwrap_or(base.max_steps),
        lambda: lambda_,
        seed,
        ..base
    };
    let recs = records(scenario(scenario_id)?, x, Some(y))?;
    let out = py.detach(|| trainer::train(&recs, &cfg)).map_err(err)?;
    let report = to_py(py, &out.test_report)?;
    Ok((PyKanModel { inner: out.model }, report))
}

#[pymodule]
#[pyo3(name = "kan_dfm")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(save_csv, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<PyRuleEngine>()?;
    m.add_class::<PyKanModel>()?;
    Ok(())
}
