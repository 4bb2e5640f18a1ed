//! Python bindings: `import homodyne_bell_py`.
//!
//! Structured results (probabilities, angle optima, verification reports)
//! come back as plain dicts; states and optimization reports are classes.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use homodyne_bell::bell::{self, BellEvaluator, BellKind};
use homodyne_bell::engine::{self, CouplingTable, EngineError, LogBase};
use homodyne_bell::optimizer::{self, OptimizerConfig, OptimizerError};
use homodyne_bell::oracle::{self, OracleError, QuadratureSpec};
use homodyne_bell::specfun;
use homodyne_bell::states::{CorrelatedState, StateError};

fn state_err(e: StateError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn engine_err(e: EngineError) -> PyErr {
    match e {
        EngineError::TruncationMismatch { .. } => PyValueError::new_err(e.to_string()),
        _ => PyArithmeticError::new_err(e.to_string()),
    }
}

fn optimizer_err(e: OptimizerError) -> PyErr {
    match e {
        OptimizerError::Engine(e) => engine_err(e),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn oracle_err(e: OracleError) -> PyErr {
    match e {
        OracleError::InvalidSpec(_) => PyValueError::new_err(e.to_string()),
        OracleError::ResolutionWarning { .. } => PyArithmeticError::new_err(e.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<BellKind> {
    kind.parse().map_err(PyValueError::new_err)
}

fn log_base(nats: bool) -> LogBase {
    if nats {
        LogBase::Nats
    } else {
        LogBase::Bits
    }
}

/// Round-trips a serializable value through `json.loads`.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "CorrelatedState", module = "homodyne_bell_py", frozen)]
pub struct PyState {
    inner: CorrelatedState,
}

impl PyState {
    fn table(&self) -> CouplingTable {
        CouplingTable::build(self.inner.truncation())
    }
}

#[pymethods]
impl PyState {
    /// Normalizes the given coefficients `c_0..c_N`.
    #[new]
    fn new(coefficients: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: CorrelatedState::from_coefficients(&coefficients).map_err(state_err)?,
        })
    }

    #[staticmethod]
    fn vacuum(truncation: usize) -> Self {
        Self {
            inner: CorrelatedState::vacuum(truncation),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (r, truncation = 10))]
    fn circle(r: f64, truncation: usize) -> PyResult<Self> {
        Ok(Self {
            inner: CorrelatedState::circle(r, truncation).map_err(state_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (s, truncation = 10))]
    fn squeezed(s: f64, truncation: usize) -> PyResult<Self> {
        Ok(Self {
            inner: CorrelatedState::squeezed(s, truncation).map_err(state_err)?,
        })
    }

    #[staticmethod]
    fn two_pair(c0: f64) -> PyResult<Self> {
        Ok(Self {
            inner: CorrelatedState::two_pair(c0).map_err(state_err)?,
        })
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients().to_vec()
    }

    #[getter]
    fn truncation(&self) -> usize {
        self.inner.truncation()
    }

    fn mean_photon_number(&self) -> f64 {
        self.inner.mean_photon_number()
    }

    fn with_truncation(&self, truncation: usize) -> Self {
        Self {
            inner: self.inner.with_truncation(truncation),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.coefficients().len()
    }

    fn __repr__(&self) -> String {
        format!("CorrelatedState({:?})", self.inner.coefficients())
    }
}

#[pyclass(name = "OptimizationReport", module = "homodyne_bell_py", frozen)]
pub struct PyReport {
    inner: optimizer::OptimizationReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.short_name()
    }

    #[getter]
    fn best_state(&self) -> PyState {
        PyState {
            inner: self.inner.best_state.clone(),
        }
    }

    #[getter]
    fn best_value(&self) -> f64 {
        self.inner.best_value
    }

    #[getter]
    fn best_psi(&self) -> f64 {
        self.inner.best_psi
    }

    #[getter]
    fn margin(&self) -> f64 {
        self.inner.margin
    }

    #[getter]
    fn violated(&self) -> bool {
        self.inner.violated
    }

    #[getter]
    fn violation_percent(&self) -> Option<f64> {
        self.inner.violation_percent
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn no_improvement(&self) -> bool {
        self.inner.no_improvement
    }

    /// Full report, trace included, as a dict.
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "OptimizationReport(kind={}, best_value={:.6}, best_psi={:.6}, violated={})",
            self.inner.kind.short_name(),
            self.inner.best_value,
            self.inner.best_psi,
            self.inner.violated
        )
    }
}

/// `{"p11", "p00", "p10", "p01"}` at angle sum `psi`.
#[pyfunction]
fn joint_probabilities<'py>(
    py: Python<'py>,
    state: &PyState,
    psi: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let jp = engine::joint_probabilities(&state.inner, &state.table(), psi).map_err(engine_err)?;
    let d = PyDict::new(py);
    d.set_item("p11", jp.p11)?;
    d.set_item("p00", jp.p00)?;
    d.set_item("p10", jp.p10)?;
    d.set_item("p01", jp.p01)?;
    Ok(d)
}

#[pyfunction]
fn correlation_e(state: &PyState, psi: f64) -> PyResult<f64> {
    engine::correlation_e(&state.inner, &state.table(), psi).map_err(engine_err)
}

#[pyfunction]
fn coupling_coefficient(n: usize, m: usize) -> f64 {
    CouplingTable::build(n.max(m)).get(n, m)
}

/// Functional `kind` ("ch", "spin" or "info") at one angle.
#[pyfunction]
#[pyo3(signature = (state, kind, psi, nats = false))]
fn bell_value(state: &PyState, kind: &str, psi: f64, nats: bool) -> PyResult<f64> {
    let kind = parse_kind(kind)?;
    BellEvaluator::new(&state.inner, &state.table(), log_base(nats))
        .and_then(|e| e.evaluate(kind, psi))
        .map_err(engine_err)
}

#[pyfunction]
#[pyo3(signature = (state, kind, nats = false))]
fn maximize_over_angle<'py>(
    py: Python<'py>,
    state: &PyState,
    kind: &str,
    nats: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = parse_kind(kind)?;
    let result = bell::maximize_over_angle(&state.inner, &state.table(), kind, log_base(nats))
        .map_err(engine_err)?;
    to_py(py, &result)
}

#[pyfunction]
#[pyo3(signature = (state, kind, psi, nats = false))]
fn psi_sweep(state: &PyState, kind: &str, psi: Vec<f64>, nats: bool) -> PyResult<Vec<f64>> {
    let kind = parse_kind(kind)?;
    let rows = bell::psi_sweep(&state.inner, &state.table(), kind, &psi, log_base(nats))
        .map_err(engine_err)?;
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

#[pyfunction]
#[pyo3(signature = (kind, truncation, max_iters = 2000, tol = 1e-7, restarts = 8, seed = 42))]
fn optimize(
    py: Python<'_>,
    kind: &str,
    truncation: usize,
    max_iters: usize,
    tol: f64,
    restarts: usize,
    seed: u64,
) -> PyResult<PyReport> {
    let kind = parse_kind(kind)?;
    let config = OptimizerConfig {
        max_iters,
        tol,
        restarts,
        seed,
    };
    let inner = py
        .detach(|| optimizer::optimize_coefficients(kind, truncation, &config))
        .map_err(optimizer_err)?;
    Ok(PyReport { inner })
}

/// Runs the quadrature cross-checks and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (truncation = 10, points = 400))]
fn verify(py: Python<'_>, truncation: usize, points: usize) -> PyResult<Bound<'_, PyAny>> {
    let spec = QuadratureSpec::with_points(truncation, points);
    let report = py
        .detach(|| {
            oracle::verify_all(
                &CouplingTable::build(truncation),
                &oracle::default_psi_grid(),
                &oracle::default_states(truncation),
                &spec,
            )
        })
        .map_err(oracle_err)?;
    to_py(py, &report)
}

#[pyfunction]
fn reciprocal_gamma(x: f64) -> f64 {
    specfun::reciprocal_gamma(x)
}

#[pyfunction]
fn f_coefficient(n: u32, m: u32) -> f64 {
    specfun::f_coefficient(n, m)
}

#[pyfunction]
fn half_range_overlap(n: u32, m: u32) -> f64 {
    specfun::half_range_overlap(n, m)
}

#[pyfunction]
fn oscillator_fn(n: u32, x: f64) -> f64 {
    specfun::oscillator_fn(n, x)
}

#[pyfunction]
fn bessel_i0(z: f64) -> f64 {
    specfun::bessel_i0(z)
}

#[pymodule]
fn homodyne_bell_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyState>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(joint_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_e, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(bell_value, m)?)?;
    m.add_function(wrap_pyfunction!(maximize_over_angle, m)?)?;
    m.add_function(wrap_pyfunction!(psi_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(reciprocal_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(f_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(half_range_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(oscillator_fn, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_i0, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
