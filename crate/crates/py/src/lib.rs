//! Python bindings. Reports come back as plain dicts, decoded from the same
//! JSON the CLI writes.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use zlab_core::catalog::{entry, entry_names};
use zlab_core::config::RunConfig;
use zlab_core::geometry::{kobayashi as kobayashi_exact, kobayashi_numeric, DomainSpec, NumericOptions};
use zlab_core::marty;
use zlab_core::mu::{geometric_schedule, mu_scan, DetectionOptions};
use zlab_core::pipeline::{self, PipelineError, ScanSummary};
use zlab_core::{Complex64, HolomorphicFamily, TargetMetric};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_error(e: PipelineError) -> PyErr {
    if e.exit_code() == 2 {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn loads<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    loads(py, &text)
}

fn pick_metric(src: Option<&str>, family: &HolomorphicFamily) -> PyResult<TargetMetric> {
    let m = match src {
        Some(s) => s.parse::<TargetMetric>().map_err(value_error)?,
        None if family.target_dim() == 1 => TargetMetric::RiemannSphere,
        None => TargetMetric::Euclidean(family.target_dim()),
    };
    if m.dim() != family.target_dim() {
        return Err(value_error(format!(
            "metric {m} does not fit a family with {} components",
            family.target_dim()
        )));
    }
    Ok(m)
}

/// A holomorphic family `f_n: Ω → C^k` indexed by `n = 1, 2, ...`.
#[pyclass(name = "Family", module = "zlab", frozen)]
struct Family {
    inner: HolomorphicFamily,
}

#[pymethods]
impl Family {
    #[new]
    #[pyo3(signature = (components, dim, domain = "polydisc", constants = None, description = ""))]
    fn new(
        components: Vec<String>,
        dim: usize,
        domain: &str,
        constants: Option<BTreeMap<String, Complex64>>,
        description: &str,
    ) -> PyResult<Self> {
        let d = DomainSpec::parse_short(domain)
            .and_then(|s| s.build(dim))
            .map_err(value_error)?;
        let sources: Vec<&str> = components.iter().map(String::as_str).collect();
        let inner = HolomorphicFamily::parse(&sources, dim, d, constants.unwrap_or_default(), description)
            .map_err(value_error)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_catalog(name: &str) -> PyResult<Self> {
        let e = entry(name).ok_or_else(|| value_error(format!("no catalog entry '{name}'")))?;
        Ok(Self {
            inner: e.family().map_err(value_error)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: HolomorphicFamily::from_toml(text).map_err(value_error)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    #[getter]
    fn target_dim(&self) -> usize {
        self.inner.target_dim()
    }

    #[getter]
    fn components(&self) -> Vec<String> {
        self.inner.components().iter().map(|e| e.to_string()).collect()
    }

    #[getter]
    fn domain(&self) -> &'static str {
        self.inner.domain().name()
    }

    fn eval(&self, point: Vec<Complex64>, n: u64) -> PyResult<Vec<Complex64>> {
        self.inner.eval(&point, n).map_err(value_error)
    }

    /// Rows are target components, columns ambient coordinates.
    fn jacobian(&self, point: Vec<Complex64>, n: u64) -> PyResult<Vec<Vec<Complex64>>> {
        let j = self.inner.jacobian(&point, n).map_err(value_error)?;
        Ok(j.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    #[pyo3(signature = (point, n, metric = None))]
    fn derivative_sup(&self, point: Vec<Complex64>, n: u64, metric: Option<&str>) -> PyResult<f64> {
        let m = pick_metric(metric, &self.inner)?;
        marty::derivative_sup(&self.inner, n, &point, m).map_err(value_error)
    }

    #[pyo3(signature = (point, n, metric = None))]
    fn marty_quotient(&self, point: Vec<Complex64>, n: u64, metric: Option<&str>) -> PyResult<f64> {
        let m = pick_metric(metric, &self.inner)?;
        marty::marty_quotient(&self.inner, n, &point, self.inner.domain(), m).map_err(value_error)
    }

    /// μ₁ detection, locus classification, and verdict on a grid of the
    /// declared domain.
    #[pyo3(signature = (resolution = 9, margin = 0.2, max_exponent = 14, metric = None, max_degree = 4))]
    fn mu_scan<'py>(
        &self,
        py: Python<'py>,
        resolution: usize,
        margin: f64,
        max_exponent: u32,
        metric: Option<&str>,
        max_degree: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let m = pick_metric(metric, &self.inner)?;
        let d = self.inner.domain();
        let grid = d.sample_grid(resolution, margin).map_err(value_error)?;
        let schedule = geometric_schedule(max_exponent);
        let report = py
            .detach(|| mu_scan(&self.inner, d, m, &grid, &schedule, &DetectionOptions::default(), max_degree))
            .map_err(value_error)?;
        to_py(py, &ScanSummary::from_report(&report))
    }

    fn __repr__(&self) -> String {
        format!("Family({:?}, dim={}, domain={:?})", self.components(), self.dim(), self.domain())
    }
}

/// Infinitesimal Kobayashi metric `F_K(z, ξ)` of a model domain.
#[pyfunction]
#[pyo3(signature = (domain, z, xi, numeric = false, degree = 3, restarts = 8, seed = 0))]
fn kobayashi(
    py: Python<'_>,
    domain: &str,
    z: Vec<Complex64>,
    xi: Vec<Complex64>,
    numeric: bool,
    degree: usize,
    restarts: usize,
    seed: u64,
) -> PyResult<f64> {
    let d = DomainSpec::parse_short(domain)
        .and_then(|s| s.build(z.len()))
        .map_err(value_error)?;
    let value = if numeric {
        let opts = NumericOptions { degree, restarts, seed };
        py.detach(|| kobayashi_numeric(&d, &z, &xi, &opts))
    } else {
        py.detach(|| kobayashi_exact(&d, &z, &xi))
    };
    value.map_err(value_error)
}

#[pyfunction]
fn catalog_names() -> Vec<String> {
    entry_names()
}

/// The catalog entry as family-file TOML.
#[pyfunction]
fn catalog_entry(name: &str) -> PyResult<String> {
    entry(name)
        .map(|e| e.to_toml())
        .ok_or_else(|| value_error(format!("no catalog entry '{name}'")))
}

/// Runs `marty-sweep`, `mu-scan`, or `rescale` from a run-config TOML
/// string and returns the report.
#[pyfunction]
#[pyo3(signature = (command, config = ""))]
fn run<'py>(py: Python<'py>, command: &str, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::from_toml(config).map_err(value_error)?;
    let r = cfg.resolve().map_err(value_error)?;
    let out = py
        .detach(|| match command {
            "marty-sweep" => pipeline::run_marty_sweep(&r, false),
            "mu-scan" => pipeline::run_mu_scan(&r, false),
            "rescale" => pipeline::run_rescale(&r, false),
            other => Err(PipelineError::Usage(format!("unknown command '{other}'"))),
        })
        .map_err(pipeline_error)?;
    loads(py, &out.report.to_json())
}

#[pyfunction]
#[pyo3(signature = (points, max_degree = 4, seed = 0))]
fn classify_points<'py>(
    py: Python<'py>,
    points: Vec<Vec<Complex64>>,
    max_degree: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let dim = points.first().map_or(1, Vec::len);
    let out = pipeline::run_classify_points(&points, dim, max_degree, seed).map_err(pipeline_error)?;
    loads(py, &out.report.to_json())
}

/// Checks every built-in catalog entry and returns the summary report.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn verify_catalog<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let out = py.detach(|| pipeline::verify_catalog(None, seed));
    loads(py, &out.report.to_json())
}

#[pymodule]
fn zlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Family>()?;
    m.add_function(wrap_pyfunction!(kobayashi, m)?)?;
    m.add_function(wrap_pyfunction!(catalog_names, m)?)?;
    m.add_function(wrap_pyfunction!(catalog_entry, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(classify_points, m)?)?;
    m.add_function(wrap_pyfunction!(verify_catalog, m)?)?;
    m.add("SCHEMA", zlab_core::report::SCHEMA)?;
    Ok(())
}
