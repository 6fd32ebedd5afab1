//! Python bindings. Results cross the boundary as JSON and come back as plain
//! dicts and lists, with the same shapes the CLI prints.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyType;

use tertium::bounds::{self, BoundsError};
use tertium::feasibility::{self, FeasibilityError};
use tertium::scenarios::{self, ScenarioError};
use tertium::{
    Experiment, LabelingScheme, Overrides, RunConfig, SettingId, StationId, TermRotation, TimeIndex,
};

create_exception!(
    tertium,
    CapacityError,
    PyValueError,
    "Too many distinct variables to enumerate."
);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn bounds_err(e: BoundsError) -> PyErr {
    match e {
        BoundsError::Capacity { .. } => CapacityError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn scenario_err(e: ScenarioError) -> PyErr {
    match e {
        ScenarioError::Bounds(b) => bounds_err(b),
        other => value_err(other),
    }
}

fn scheme(name: &str) -> PyResult<LabelingScheme> {
    name.parse().map_err(value_err)
}

/// Serializes through JSON into Python objects.
fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A sum of product terms, e.g. `Expression("a@Lille*b@Lyon + a@Lille*c@Lyon")`.
#[pyclass(name = "Expression", module = "tertium", frozen)]
#[derive(Clone)]
struct PyExpression {
    inner: tertium::Expression,
}

#[pymethods]
impl PyExpression {
    /// Text form or a preset name (lg, lg-two-station, lg-pairs).
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(PyExpression {
            inner: tertium::Expression::preset_or_parse(text).map_err(bounds_err)?,
        })
    }

    #[classmethod]
    fn from_json(_cls: &Bound<'_, PyType>, text: &str) -> PyResult<Self> {
        Ok(PyExpression {
            inner: serde_json::from_str(text).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("serializable")
    }

    #[getter]
    fn term_count(&self) -> usize {
        self.inner.term_count()
    }

    fn distinct_variables(&self, labeling: &str) -> PyResult<usize> {
        Ok(tertium::distinct_variable_count(
            &self.inner,
            scheme(labeling)?,
        ))
    }

    /// Tight min/max over all ±1 assignments under `labeling`.
    #[pyo3(signature = (labeling = "setting-only", cap = bounds::DEFAULT_VARIABLE_CAP))]
    fn bounds(&self, py: Python<'_>, labeling: &str, cap: usize) -> PyResult<PyObject> {
        let b = bounds::enumerate_bounds_capped(&self.inner, scheme(labeling)?, cap)
            .map_err(bounds_err)?;
        to_py(py, &b)
    }

    #[pyo3(signature = (labeling = "setting-only"))]
    fn cyclicity(&self, py: Python<'_>, labeling: &str) -> PyResult<PyObject> {
        to_py(
            py,
            &bounds::detect_cyclicity(&self.inner, scheme(labeling)?),
        )
    }

    /// Whether per-term target expectations admit one joint distribution.
    #[pyo3(signature = (targets, labeling = "setting-only"))]
    fn feasibility(&self, py: Python<'_>, targets: Vec<f64>, labeling: &str) -> PyResult<PyObject> {
        let problem = tertium::FeasibilityProblem {
            expression: self.inner.clone(),
            labeling: scheme(labeling)?,
            targets,
        };
        let verdict = feasibility::check_feasibility(&problem).map_err(|e| match e {
            FeasibilityError::Capacity { .. } => CapacityError::new_err(e.to_string()),
            FeasibilityError::Bounds(b) => bounds_err(b),
            other => value_err(other),
        })?;
        to_py(py, &verdict)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Expression({:?})", self.inner.to_string())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

/// Logical variable key of one outcome descriptor.
#[pyfunction]
#[pyo3(signature = (setting, station, labeling, time = 0, slot = 0))]
fn label(setting: &str, station: &str, labeling: &str, time: u64, slot: usize) -> PyResult<String> {
    let setting = SettingId::new(setting).map_err(value_err)?;
    let station = StationId::new(station).map_err(value_err)?;
    Ok(tertium::label(&setting, &station, TimeIndex(time), slot, scheme(labeling)?).to_string())
}

#[pyfunction]
fn labeling_schemes() -> Vec<&'static str> {
    LabelingScheme::NAMES.to_vec()
}

#[pyfunction]
fn list_scenarios(py: Python<'_>) -> PyResult<PyObject> {
    to_py(py, &scenarios::list_scenarios())
}

fn rotation(name: Option<&str>) -> PyResult<Option<TermRotation>> {
    name.map(|r| r.parse().map_err(PyValueError::new_err))
        .transpose()
}

fn run_result(
    py: Python<'_>,
    run: scenarios::ScenarioRun,
    include_log: bool,
) -> PyResult<PyObject> {
    let report = to_py(py, &run.report)?;
    if include_log {
        report.bind(py).set_item("log", to_py(py, &run.log)?)?;
    }
    Ok(report)
}

/// Runs a built-in scenario and returns its report as a dict.
#[pyfunction]
#[pyo3(signature = (name, n = None, seed = None, rotation = None, labeling = None, threads = None, include_log = false))]
#[allow(clippy::too_many_arguments)]
fn run_scenario(
    py: Python<'_>,
    name: &str,
    n: Option<u64>,
    seed: Option<u64>,
    rotation: Option<&str>,
    labeling: Option<&str>,
    threads: Option<usize>,
    include_log: bool,
) -> PyResult<PyObject> {
    let overrides = Overrides {
        trials: n,
        seed,
        rotation: self::rotation(rotation)?,
        threads,
        labeling: labeling.map(scheme).transpose()?,
    };
    let run = py
        .allow_threads(|| scenarios::run_scenario(name, &overrides))
        .map_err(scenario_err)?;
    run_result(py, run, include_log)
}

/// Runs an experiment definition given as JSON text.
#[pyfunction]
#[pyo3(signature = (definition, n = 10_000, seed = tertium::engine::DEFAULT_SEED, rotation = None, labeling = None, threads = None, include_log = false))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    definition: &str,
    n: u64,
    seed: u64,
    rotation: Option<&str>,
    labeling: Option<&str>,
    threads: Option<usize>,
    include_log: bool,
) -> PyResult<PyObject> {
    let experiment = Experiment::from_json(definition).map_err(value_err)?;
    let mut config = RunConfig::new(n, seed);
    config.rotation = self::rotation(rotation)?.unwrap_or_default();
    config.threads = threads;
    let schemes = match labeling
        .map(scheme)
        .transpose()?
        .or(experiment.def().labeling)
    {
        Some(s) => vec![s],
        None => LabelingScheme::ALL.to_vec(),
    };
    let name = experiment
        .def()
        .name
        .clone()
        .unwrap_or_else(|| "experiment".into());
    let run = py
        .allow_threads(|| scenarios::run_experiment(&name, &experiment, &config, &schemes))
        .map_err(scenario_err)?;
    run_result(py, run, include_log)
}

/// Experiment definition of a built-in scenario as JSON text.
#[pyfunction]
fn scenario_definition(name: &str) -> PyResult<String> {
    let s = scenarios::get(name).map_err(scenario_err)?;
    Ok(serde_json::to_string_pretty(&s.experiment).expect("serializable"))
}

/// `-a·b` for unit vectors `a` and `b`.
#[pyfunction]
fn singlet_correlation(a: [f64; 3], b: [f64; 3]) -> PyResult<f64> {
    tertium::singlet_correlation(&a, &b).map_err(value_err)
}

#[pymodule]
#[pyo3(name = "tertium")]
fn tertium_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("DEFAULT_SEED", tertium::engine::DEFAULT_SEED)?;
    m.add("CapacityError", m.py().get_type::<CapacityError>())?;
    m.add_class::<PyExpression>()?;
    m.add_function(wrap_pyfunction!(label, m)?)?;
    m.add_function(wrap_pyfunction!(labeling_schemes, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_definition, m)?)?;
    m.add_function(wrap_pyfunction!(singlet_correlation, m)?)?;
    Ok(())
}
