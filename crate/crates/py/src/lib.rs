//! Python bindings: run the offline pipeline, evaluate a trained surrogate,
//! and call the node generator and POD directly.
//!
//! Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use meshfree_rom::geometry::{generate_nodes as gen_nodes, PolarDomain};
use meshfree_rom::pipeline::{self, ArtifactStore, DomainPolicy, RunConfig, StageStatus, Surrogate};
use meshfree_rom::pod::compute_pod;
use meshfree_rom::Error;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Dimension(_) | Error::OutOfDomain(..) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Scattered nodes on the flower domain (or a circle of radius `radius`).
/// Returns `(interior, boundary)` as lists of `[x, y]`.
#[pyfunction]
#[pyo3(signature = (n_interior, n_boundary, seed=0, radius=None))]
fn generate_nodes(n_interior: usize, n_boundary: usize, seed: u64, radius: Option<f64>) -> PyResult<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    let domain = match radius {
        Some(r) => PolarDomain::circle(r).map_err(to_py)?,
        None => PolarDomain::flower(),
    };
    let cfg = meshfree_rom::geometry::NodeConfig {
        n_boundary,
        candidate_count: 4 * n_interior,
        target_interior: n_interior,
        seed,
        margin: 0.0,
    };
    let nodes = gen_nodes(&domain, &cfg).map_err(to_py)?;
    Ok((nodes.interior, nodes.boundary))
}

/// POD of a snapshot matrix given as rows (one row per node, one column per
/// snapshot). Returns `(basis rows, singular values)`.
#[pyfunction]
#[pyo3(signature = (snapshots, eps_pod=1e-6))]
fn pod(snapshots: Vec<Vec<f64>>, eps_pod: f64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let s = matrix_from_rows(&snapshots)?;
    let basis = compute_pod(&s, eps_pod).map_err(to_py)?;
    Ok((rows_of(&basis.v), basis.singular_values))
}

/// Runs the offline stages into `output_dir`, skipping those already up to
/// date. Returns `(stage, "ran" | "skipped")` pairs.
#[pyfunction]
#[pyo3(signature = (output_dir, preset="toy", config=None, seed=None))]
fn run_offline(
    py: Python<'_>,
    output_dir: PathBuf,
    preset: &str,
    config: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<Vec<(String, String)>> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(&path),
        None => RunConfig::preset(preset),
    }
    .map_err(to_py)?;
    cfg.output_dir = output_dir;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    let (_, report) = py.detach(|| pipeline::run_through(&cfg, "train")).map_err(to_py)?;
    Ok(report
        .into_iter()
        .map(|(stage, status)| (stage, if status == StageStatus::Ran { "ran" } else { "skipped" }.to_string()))
        .collect())
}

/// A trained surrogate loaded from an artifact directory.
#[pyclass(name = "Surrogate", frozen)]
struct PySurrogate {
    inner: Surrogate,
}

#[pymethods]
impl PySurrogate {
    #[new]
    fn new(output_dir: PathBuf) -> PyResult<Self> {
        let store = ArtifactStore::open(&output_dir).map_err(to_py)?;
        Ok(Self { inner: Surrogate::load(&store).map_err(to_py)? })
    }

    #[getter]
    fn n_pod(&self) -> usize {
        self.inner.basis.ncols()
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.basis.nrows()
    }

    #[getter]
    fn bounds(&self) -> Vec<(f64, f64)> {
        self.inner.bounds.clone()
    }

    /// Nodal solutions, one row per parameter row.
    #[pyo3(signature = (params, allow_outside=false))]
    fn evaluate(&self, py: Python<'_>, params: Vec<Vec<f64>>, allow_outside: bool) -> PyResult<Vec<Vec<f64>>> {
        let mu = matrix_from_rows(&params)?;
        let policy = if allow_outside { DomainPolicy::Warn } else { DomainPolicy::Reject };
        let result = py.detach(|| self.inner.online(&mu, policy)).map_err(to_py)?;
        Ok(rows_of(&result.solutions))
    }
}

/// Compares RBF-FD, reduced least squares and the surrogate on the stored
/// test split. Returns `{method: (mean relative error, seconds)}`.
#[pyfunction]
fn benchmark(py: Python<'_>, output_dir: PathBuf) -> PyResult<Vec<(String, f64, f64)>> {
    let store = ArtifactStore::open(&output_dir).map_err(to_py)?;
    let report = py.detach(|| pipeline::benchmark(&store)).map_err(to_py)?;
    Ok(report.rows.into_iter().map(|r| (r.method, r.mean_rel_error, r.total_seconds)).collect())
}

#[pymodule]
fn meshrom(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(generate_nodes, m)?)?;
    m.add_function(wrap_pyfunction!(pod, m)?)?;
    m.add_function(wrap_pyfunction!(run_offline, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    m.add_class::<PySurrogate>()?;
    Ok(())
}
