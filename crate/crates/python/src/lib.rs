//! Python bindings. Structured results cross the boundary as plain dicts
//! and lists built from their JSON form.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyComplex, PyDict};
use serde::de::DeserializeOwned;
use serde::Serialize;

use tripsyn_core::config::{ExperimentConfig, Scenario};
use tripsyn_core::network::{build_network, phase_rates, run_protocol, NetworkParams, RunOptions, WmPreset, RATE_FLOOR_HZ};
use tripsyn_core::reduced::{simulate_extended as sim_extended, ExtendedScenario};
use tripsyn_core::stability::{self, AdmissibleInput, CheckOptions, ReportOptions};
use tripsyn_core::tripartite::{self as tp, JGluMode, TripartiteConfig, RESTING_ASTROCYTE};
use tripsyn_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::Precondition(_) | Error::KindMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn json_of(obj: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Overlay a dict of keyword values onto `base`, rejecting unknown keys.
fn with_overrides<T: Serialize + DeserializeOwned>(base: &T, over: Option<&Bound<'_, PyDict>>) -> PyResult<T> {
    let mut value = serde_json::to_value(base).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    if let Some(d) = over {
        if let (serde_json::Value::Object(dst), serde_json::Value::Object(src)) = (&mut value, json_of(d.as_any())?) {
            for (k, v) in src {
                dst.insert(k, v);
            }
        }
    }
    serde_json::from_value(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Astrocyte constants. Keyword arguments replace individual defaults.
#[pyclass(name = "AstrocyteParams", from_py_object)]
#[derive(Clone, Default)]
struct PyAstrocyteParams {
    inner: tp::AstrocyteParams,
}

#[pymethods]
impl PyAstrocyteParams {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let inner = with_overrides(&tp::AstrocyteParams::default(), overrides)?;
        inner.validate("astrocyte").map_err(py_err)?;
        Ok(PyAstrocyteParams { inner })
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    fn __getattr__(&self, py: Python<'_>, name: &str) -> PyResult<Py<PyAny>> {
        let dict = to_py(py, &self.inner)?;
        dict.bind(py)
            .get_item(name)
            .map(Bound::unbind)
            .map_err(|_| pyo3::exceptions::PyAttributeError::new_err(name.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("AstrocyteParams(a_glu={}, tau_ip3={}, ...)", self.inner.a_glu, self.inner.tau_ip3)
    }
}

/// IP₃ (μM), Ca²⁺ (μM) and active receptor fraction.
#[pyclass(name = "AstrocyteState", from_py_object)]
#[derive(Clone, Copy)]
struct PyAstrocyteState {
    #[pyo3(get, set)]
    x1: f64,
    #[pyo3(get, set)]
    x2: f64,
    #[pyo3(get, set)]
    x3: f64,
}

impl From<tp::AstrocyteState> for PyAstrocyteState {
    fn from(s: tp::AstrocyteState) -> Self {
        PyAstrocyteState { x1: s.x1, x2: s.x2, x3: s.x3 }
    }
}

impl From<PyAstrocyteState> for tp::AstrocyteState {
    fn from(s: PyAstrocyteState) -> Self {
        tp::AstrocyteState::new(s.x1, s.x2, s.x3)
    }
}

#[pymethods]
impl PyAstrocyteState {
    #[new]
    fn new(x1: f64, x2: f64, x3: f64) -> Self {
        PyAstrocyteState { x1, x2, x3 }
    }

    #[staticmethod]
    fn resting() -> Self {
        RESTING_ASTROCYTE.into()
    }

    fn to_tuple(&self) -> (f64, f64, f64) {
        (self.x1, self.x2, self.x3)
    }

    fn __repr__(&self) -> String {
        format!("AstrocyteState(x1={}, x2={}, x3={})", self.x1, self.x2, self.x3)
    }
}

fn params_or_default(p: Option<PyAstrocyteParams>) -> tp::AstrocyteParams {
    p.unwrap_or_default().inner
}

/// Time derivative of the astrocyte state under IP₃ input `u` (μM/s).
#[pyfunction]
#[pyo3(signature = (state, u, params=None))]
fn astrocyte_derivative(state: PyAstrocyteState, u: f64, params: Option<PyAstrocyteParams>) -> PyAstrocyteState {
    tp::astrocyte_derivative(&state.into(), u, &params_or_default(params)).into()
}

/// Gliotransmitter current (μA) for Ca²⁺ level `x2` (μM).
#[pyfunction]
fn i_astro(x2: f64) -> f64 {
    tp::i_astro(x2)
}

#[pyfunction]
fn i_astro_smooth(x2: f64) -> f64 {
    tp::i_astro_smooth(x2)
}

#[pyfunction]
#[pyo3(signature = (g, params=None, smooth=false))]
fn j_glu(g: f64, params: Option<PyAstrocyteParams>, smooth: bool) -> f64 {
    let mode = if smooth { JGluMode::smooth() } else { JGluMode::Sharp };
    tp::j_glu(g, &params_or_default(params), mode)
}

#[pyfunction]
#[pyo3(signature = (u, params=None, guess=None))]
fn find_equilibrium(u: f64, params: Option<PyAstrocyteParams>, guess: Option<PyAstrocyteState>) -> PyResult<PyAstrocyteState> {
    let guess = guess.map(Into::into).unwrap_or(RESTING_ASTROCYTE);
    stability::find_equilibrium(&params_or_default(params), u, guess).map(Into::into).map_err(py_err)
}

/// Row-major 3x3 Jacobian of the astrocyte vector field.
#[pyfunction]
#[pyo3(signature = (state, u, params=None))]
fn jacobian(state: PyAstrocyteState, u: f64, params: Option<PyAstrocyteParams>) -> PyResult<[[f64; 3]; 3]> {
    stability::jacobian(&params_or_default(params), &state.into(), u).map_err(py_err)
}

#[pyfunction]
fn eigenvalues(py: Python<'_>, matrix: [[f64; 3]; 3]) -> Vec<Bound<'_, PyComplex>> {
    stability::eigenvalues(&matrix).iter().map(|z| PyComplex::from_doubles(py, z.re, z.im)).collect()
}

#[pyfunction]
#[pyo3(signature = (params=None, a_glu=None))]
fn ultimate_bound(py: Python<'_>, params: Option<PyAstrocyteParams>, a_glu: Option<f64>) -> PyResult<Py<PyAny>> {
    let p = params_or_default(params);
    let a = a_glu.unwrap_or(p.a_glu);
    to_py(py, &stability::ultimate_bound(&p, a))
}

/// Randomized positivity check under inputs switching in `[0, a_glu]`.
#[pyfunction]
#[pyo3(signature = (params=None, trials=20, seed=0, horizon=60.0))]
fn check_positivity(
    py: Python<'_>,
    params: Option<PyAstrocyteParams>,
    trials: usize,
    seed: u64,
    horizon: f64,
) -> PyResult<Py<PyAny>> {
    let p = params_or_default(params);
    let input = AdmissibleInput::RandomSwitching { max: p.a_glu, hold: 1.0 };
    let opts = CheckOptions { trials, seed, horizon, ..Default::default() };
    let verdict = py.detach(|| stability::check_positivity(&p, &input, &opts)).map_err(py_err)?;
    to_py(py, &verdict)
}

#[pyfunction]
#[pyo3(signature = (u, params=None, trials=20, seed=0))]
fn stability_report(py: Python<'_>, u: f64, params: Option<PyAstrocyteParams>, trials: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let p = params_or_default(params);
    let mut opts = ReportOptions::default().with_seed(seed);
    opts.positivity.trials = trials;
    opts.boundedness.check.trials = trials;
    let report = py.detach(|| stability::stability_report(&p, u, RESTING_ASTROCYTE, &opts)).map_err(py_err)?;
    to_py(py, &report)
}

/// Reduced astrocyte plus firing-rate model. Returns the trajectory as a dict
/// with `labels`, `times` and `samples`.
#[pyfunction]
#[pyo3(signature = (scenario="case2", duration=None, dt=None, stride=None))]
fn simulate_extended(
    py: Python<'_>,
    scenario: &str,
    duration: Option<f64>,
    dt: Option<f64>,
    stride: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let sc: ExtendedScenario = serde_json::from_value(serde_json::Value::String(scenario.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown scenario `{scenario}`")))?;
    let mut cfg = sc.config();
    cfg.duration = duration.unwrap_or(cfg.duration);
    cfg.dt = dt.unwrap_or(cfg.dt);
    cfg.stride = stride.unwrap_or(cfg.stride);
    let traj = py.detach(|| sim_extended(&cfg)).map_err(py_err)?;
    to_py(py, &traj)
}

/// Two-neuron synapse with one astrocyte. `config` keys replace the
/// defaults, e.g. `{"eta": 0.5, "stimulus": {"kind": "constant", "value": 10}}`.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn simulate_tripartite(py: Python<'_>, config: Option<&Bound<'_, PyDict>>) -> PyResult<Py<PyAny>> {
    let cfg: TripartiteConfig = with_overrides(&TripartiteConfig::default(), config)?;
    let result = py.detach(|| tp::simulate_tripartite(&cfg)).map_err(py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("trajectory", to_py(py, &result.trajectory)?)?;
    dict.set_item("pre_spikes", result.pre_spikes())?;
    dict.set_item("post_spikes", result.post_spikes())?;
    Ok(dict.into_any().unbind())
}

/// Working-memory protocol on the default network. Returns per-window rates,
/// the spike count and the astrocyte audit.
#[pyfunction]
#[pyo3(signature = (preset="strong", seed=0))]
fn run_wm(py: Python<'_>, preset: &str, seed: u64) -> PyResult<Py<PyAny>> {
    let preset: WmPreset = serde_json::from_value(serde_json::Value::String(preset.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown preset `{preset}`")))?;
    let net = NetworkParams { seed, ..Default::default() };
    let opts = RunOptions { seed, ..Default::default() };
    let (raster, rates) = py
        .detach(|| -> tripsyn_core::Result<_> {
            let topology = build_network(&net)?;
            let raster = run_protocol(&topology, &preset.protocol(), &opts)?;
            let rates = phase_rates(&raster, RATE_FLOOR_HZ)?;
            Ok((raster, rates))
        })
        .map_err(py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("rates", to_py(py, &rates)?)?;
    dict.set_item("n_spikes", raster.spikes.len())?;
    dict.set_item("audit", to_py(py, &raster.audit)?)?;
    Ok(dict.into_any().unbind())
}

/// Run a scenario end to end and write its artifacts. Uses the config file
/// when given, otherwise the named preset.
#[pyfunction]
#[pyo3(signature = (config=None, scenario=None, seed=None, out=None, overrides=Vec::new()))]
fn run_experiment(
    py: Python<'_>,
    config: Option<PathBuf>,
    scenario: Option<&str>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    overrides: Vec<String>,
) -> PyResult<Py<PyAny>> {
    let scenario = scenario.map(|s| s.parse::<Scenario>().map_err(py_err)).transpose()?;
    let mut cfg = match (&config, scenario) {
        (Some(path), _) => ExperimentConfig::load(path, &overrides).map_err(py_err)?,
        (None, Some(s)) => {
            let text = ExperimentConfig::preset(s).to_toml().map_err(py_err)?;
            ExperimentConfig::from_toml_str(&text, &overrides).map_err(py_err)?
        }
        (None, None) => return Err(PyValueError::new_err("either config or scenario is required")),
    };
    if let Some(s) = scenario {
        cfg.scenario = s;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    let summary = py.detach(|| tripsyn_core::experiment::run_experiment(&cfg)).map_err(py_err)?;
    to_py(py, &summary)
}

/// `(name, description)` for every built-in scenario.
#[pyfunction]
fn presets() -> Vec<(&'static str, &'static str)> {
    Scenario::ALL.iter().map(|s| (s.name(), s.description())).collect()
}

#[pymodule]
fn tripsyn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", tripsyn_core::experiment::VERSION)?;
    m.add_class::<PyAstrocyteParams>()?;
    m.add_class::<PyAstrocyteState>()?;
    m.add_function(wrap_pyfunction!(astrocyte_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(i_astro, m)?)?;
    m.add_function(wrap_pyfunction!(i_astro_smooth, m)?)?;
    m.add_function(wrap_pyfunction!(j_glu, m)?)?;
    m.add_function(wrap_pyfunction!(find_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(ultimate_bound, m)?)?;
    m.add_function(wrap_pyfunction!(check_positivity, m)?)?;
    m.add_function(wrap_pyfunction!(stability_report, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_extended, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_tripartite, m)?)?;
    m.add_function(wrap_pyfunction!(run_wm, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    Ok(())
}
