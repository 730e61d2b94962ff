//! Python bindings: environments, collection, training, evaluation and the
//! DDPM forward process.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rmb_core::bench::{evaluate as bench_evaluate, PolicyAgent, SuccessReport};
use rmb_core::collect::{collect_dataset, ScriptedSource};
use rmb_core::datastore::{validate, Dataset};
use rmb_core::env::{make_env, make_env_with_spec, registered_ids, Action, Environment, Observation};
use rmb_core::policies::{ddpm_forward as core_ddpm_forward, train as core_train, PolicyConfig, PolicyKind, PolicyModel, Schedule};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// JSON-serialisable Rust value to the equivalent Python object.
fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// `{name: {"shape": [...], "data": [...]}}` with data flattened row-major.
fn obs_to_py<'py>(py: Python<'py>, obs: &Observation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (name, t) in &obs.channels {
        let entry = PyDict::new(py);
        entry.set_item("shape", t.shape.clone())?;
        entry.set_item("data", t.to_f64_vec())?;
        d.set_item(name, entry)?;
    }
    Ok(d)
}

/// A simulated environment.
#[pyclass(name = "Env", unsendable)]
struct PyEnv {
    inner: Environment,
}

#[pymethods]
impl PyEnv {
    #[new]
    fn new(env_id: &str) -> PyResult<Self> {
        Ok(Self { inner: make_env(env_id).map_err(|e| PyValueError::new_err(e.to_string()))? })
    }

    #[getter]
    fn spec<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.spec())
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.spec().action_dim
    }

    fn reset<'py>(&mut self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let obs = self.inner.reset(seed);
        obs_to_py(py, &obs)
    }

    /// Returns `(observation, success, done)`.
    fn step<'py>(&mut self, py: Python<'py>, action: Vec<f32>) -> PyResult<(Bound<'py, PyDict>, bool, bool)> {
        let r = self.inner.step(&Action::new(action)).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok((obs_to_py(py, &r.observation)?, r.success, r.done))
    }

    /// The full simulator state.
    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.state())
    }
}

/// A trained policy loaded from a model file.
#[pyclass(name = "Policy")]
struct PyPolicy {
    model: PolicyModel,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { model: PolicyModel::load(&path).map_err(err)? })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.model.kind.name()
    }

    #[getter]
    fn env_id(&self) -> String {
        self.model.env_spec.env_id.clone()
    }

    #[getter]
    fn training<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.model.training)
    }

    /// Rollouts on seeds `base_seed .. base_seed + episodes`.
    #[pyo3(signature = (episodes=60, base_seed=10_000))]
    fn evaluate<'py>(&self, py: Python<'py>, episodes: usize, base_seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let mut env = make_env_with_spec(self.model.env_spec.clone()).map_err(err)?;
        let mut agent = PolicyAgent::new(self.model.clone());
        let (report, results) = bench_evaluate(&mut env, &mut agent, episodes, base_seed).map_err(err)?;
        to_py(py, &serde_json::json!({ "report": report, "display": report.display(), "rollouts": results }))
    }
}

#[pyfunction]
fn env_ids() -> Vec<String> {
    registered_ids()
}

/// Records scripted demonstrations; returns the dataset summary.
#[pyfunction]
#[pyo3(signature = (env_id, out, episodes=30, seed=0))]
fn collect<'py>(py: Python<'py>, env_id: &str, out: PathBuf, episodes: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let env = make_env(env_id).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let config = serde_json::json!({"command": "collect", "env": env_id, "source": "scripted", "episodes": episodes, "seed": seed});
    let ds = collect_dataset(env, &mut ScriptedSource::new(), episodes, seed, &out, config).map_err(err)?;
    to_py(py, &serde_json::json!({"episodes": ds.len(), "successful": ds.successful().count()}))
}

/// Trains a policy (`bc`, `act` or `diffusion`) and writes the model file.
#[pyfunction]
#[pyo3(signature = (policy, dataset, out, epochs=None, chunk=None, seed=None))]
fn train(policy: &str, dataset: PathBuf, out: PathBuf, epochs: Option<usize>, chunk: Option<usize>, seed: Option<u64>) -> PyResult<PyPolicy> {
    let kind = PolicyKind::parse(policy).ok_or_else(|| PyValueError::new_err(format!("unknown policy `{policy}`")))?;
    let d = PolicyConfig::default();
    let cfg = PolicyConfig { epochs: epochs.unwrap_or(d.epochs), chunk: chunk.unwrap_or(d.chunk), seed: seed.unwrap_or(d.seed), ..d };
    let mut ds = Dataset::open(&dataset).map_err(err)?;
    let model = core_train(kind, &cfg, &mut ds).map_err(err)?;
    model.save(&out).map_err(err)?;
    Ok(PyPolicy { model })
}

/// Validation failures of one episode file (empty when healthy).
#[pyfunction]
fn validate_episode(path: PathBuf) -> Vec<String> {
    validate(path).failures
}

/// `(mean, std, display)` of 0/1 outcomes.
#[pyfunction]
fn success_report(outcomes: Vec<bool>) -> (f64, f64, String) {
    let r = SuccessReport::from_outcomes(&outcomes);
    (r.mean, r.std, r.display())
}

/// `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps` under a linear beta schedule.
#[pyfunction]
#[pyo3(signature = (x0, t, eps, steps=50, beta_start=1e-4, beta_end=0.2))]
fn ddpm_forward(x0: Vec<f64>, t: usize, eps: Vec<f64>, steps: usize, beta_start: f64, beta_end: f64) -> PyResult<Vec<f64>> {
    let s = Schedule::linear(steps, beta_start, beta_end);
    core_ddpm_forward(&x0, t, &eps, &s).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn rmb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(env_ids, m)?)?;
    m.add_function(wrap_pyfunction!(collect, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(validate_episode, m)?)?;
    m.add_function(wrap_pyfunction!(success_report, m)?)?;
    m.add_function(wrap_pyfunction!(ddpm_forward, m)?)?;
    Ok(())
}
