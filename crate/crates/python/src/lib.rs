//! Python bindings for the sparse matrix detection library.
//!
//! Matrices cross the boundary as nested lists of floats wrapped in
//! [`Matrix`]. Structured results (test reports, witnesses, boundary points,
//! phase tables) are returned as plain dicts built from their JSON form.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use sparsedet::detectors::{
    cov_chi2_scan_test, mean_chi2_scan_test, mean_threshold_test_with_cut, scan_statistic,
    CovScanThreshold, ScanConfig, ScanStrategy, TestReport,
};
use sparsedet::divergence::{
    beta_star, boundary_curves, chi2_least_favorable_exact, chi2_upper_bound_cs, mgf_gh_exact,
    mgf_h_exact, optimize_s_star, permutation_mgf, tv_upper_from_chi2,
};
use sparsedet::experiment::{
    render_phase_svg, run_experiment, run_experiment_with_threads, write_phase_csv, ExperimentConfig,
};
use sparsedet::priors::{add_gaussian_noise, gaussian_matrix, gen_block_signal, gen_prior_sample};
use sparsedet::witness::find_witness;
use sparsedet::{DenseMatrix, Error, IndexSet, RngSeed};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::Config(_) | Error::UndefinedValue(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

fn serialize_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn report_to_py<'py>(py: Python<'py>, report: &TestReport) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &report.to_json())
}

fn scan_config(
    m: usize,
    strategy: &str,
    restarts: usize,
    iters: usize,
    seed: u64,
    principal: bool,
) -> PyResult<ScanConfig> {
    let strategy = match strategy {
        "exhaustive" => ScanStrategy::Exhaustive,
        "random_restarts" => ScanStrategy::RandomRestarts { restarts, iters },
        "auto" => ScanStrategy::Auto { restarts, iters },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown scan strategy {other:?}; expected exhaustive, random_restarts or auto"
            )))
        }
    };
    let cfg = ScanConfig::new(m, strategy).with_seed(RngSeed::new(seed));
    Ok(if principal { cfg.principal() } else { cfg })
}

/// Dense row-major matrix of `f64`.
#[pyclass(name = "Matrix", module = "sparsedet_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Matrix {
    inner: DenseMatrix,
}

#[pymethods]
impl Matrix {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        DenseMatrix::from_rows(&rows).map(|inner| Self { inner }).map_err(to_py_err)
    }

    #[staticmethod]
    fn zeros(rows: usize, cols: usize) -> Self {
        Self { inner: DenseMatrix::zeros(rows, cols) }
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        sparsedet::io::read_matrix(path).map(|inner| Self { inner }).map_err(to_py_err)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        sparsedet::io::write_matrix(path, &self.inner).map_err(to_py_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        self.inner.to_rows()
    }

    fn __getitem__(&self, index: (usize, usize)) -> PyResult<f64> {
        let (i, j) = index;
        let (r, c) = self.inner.shape();
        if i >= r || j >= c {
            return Err(PyValueError::new_err(format!("index ({i}, {j}) outside {r}x{c}")));
        }
        Ok(self.inner.get(i, j))
    }

    fn __repr__(&self) -> String {
        let (r, c) = self.inner.shape();
        format!("Matrix({r}x{c})")
    }

    fn transpose(&self) -> Self {
        Self { inner: self.inner.transpose() }
    }

    fn __add__(&self, other: &Matrix) -> PyResult<Self> {
        self.inner.add(&other.inner).map(|inner| Self { inner }).map_err(to_py_err)
    }

    fn __mul__(&self, c: f64) -> Self {
        Self { inner: self.inner.scale(c) }
    }

    /// Spectral norm via the default power iteration.
    fn opnorm(&self) -> f64 {
        self.inner.opnorm()
    }

    #[pyo3(signature = (tol = 1e-12, max_iter = 10_000))]
    fn spectral_norm(&self, tol: f64, max_iter: usize) -> PyResult<f64> {
        self.inner.spectral_norm(tol, max_iter).map_err(to_py_err)
    }

    fn stable_rank(&self) -> PyResult<f64> {
        self.inner.stable_rank().map_err(to_py_err)
    }

    fn frobenius_norm_sq(&self) -> f64 {
        self.inner.frobenius_norm_sq()
    }

    fn max_abs(&self) -> f64 {
        self.inner.max_abs()
    }

    /// Largest number of nonzeros in any row or column.
    fn sparsity(&self) -> usize {
        self.inner.sparsity()
    }

    fn submatrix(&self, rows: Vec<usize>, cols: Vec<usize>) -> PyResult<Self> {
        let rows = IndexSet::new(rows, self.inner.rows()).map_err(to_py_err)?;
        let cols = IndexSet::new(cols, self.inner.cols()).map_err(to_py_err)?;
        self.inner.submatrix(&rows, &cols).map(|inner| Self { inner }).map_err(to_py_err)
    }
}

#[pyfunction]
#[pyo3(signature = (rows, cols, seed, stream = 0))]
fn gaussian(rows: usize, cols: usize, seed: u64, stream: u64) -> Matrix {
    Matrix { inner: gaussian_matrix(rows, cols, RngSeed::with_stream(seed, stream)) }
}

#[pyfunction]
fn block_signal(p: usize, k: usize, theta: f64) -> PyResult<Matrix> {
    gen_block_signal(p, k, theta).map(|inner| Matrix { inner }).map_err(to_py_err)
}

/// One draw of the least-favorable prior, returned as the full `p x p` matrix.
#[pyfunction]
fn prior_sample(p: usize, m: usize, k: usize, t: f64, seed: u64) -> PyResult<Matrix> {
    let draw = gen_prior_sample(p, m, k, t, RngSeed::new(seed)).map_err(to_py_err)?;
    Ok(Matrix { inner: draw.reconstruct() })
}

#[pyfunction]
fn add_noise(m: &Matrix, seed: u64) -> Matrix {
    Matrix { inner: add_gaussian_noise(&m.inner, RngSeed::new(seed)) }
}

#[pyfunction]
#[pyo3(signature = (x, k, epsilon = 0.1, cut_factor = 1.0))]
fn threshold_test<'py>(
    py: Python<'py>,
    x: &Matrix,
    k: usize,
    epsilon: f64,
    cut_factor: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = mean_threshold_test_with_cut(&x.inner, k, epsilon, cut_factor).map_err(to_py_err)?;
    report_to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (x, k, m, epsilon = 0.1, strategy = "auto", restarts = 8, iters = 20, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn chi2_scan_test<'py>(
    py: Python<'py>,
    x: &Matrix,
    k: usize,
    m: usize,
    epsilon: f64,
    strategy: &str,
    restarts: usize,
    iters: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = scan_config(m, strategy, restarts, iters, seed, false)?;
    let r = mean_chi2_scan_test(&x.inner, k, epsilon, &cfg).map_err(to_py_err)?;
    report_to_py(py, &r)
}

/// Covariance scan test on an `n x p` data matrix. Passing `t` uses that
/// scan threshold instead of the Gaussian-scale formula.
#[pyfunction]
#[pyo3(signature = (data, k, m, epsilon = 0.1, t = None, strategy = "auto", restarts = 8, iters = 20, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn cov_scan_test<'py>(
    py: Python<'py>,
    data: &Matrix,
    k: usize,
    m: usize,
    epsilon: f64,
    t: Option<f64>,
    strategy: &str,
    restarts: usize,
    iters: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = scan_config(m, strategy, restarts, iters, seed, true)?;
    let thr = t.map_or(CovScanThreshold::Formula, |t| CovScanThreshold::Calibrated { t });
    let r = cov_chi2_scan_test(&data.inner, k, epsilon, &cfg, thr).map_err(to_py_err)?;
    report_to_py(py, &r)
}

/// Largest spectral norm over `m x m` submatrices; returns a dict with
/// `value`, `rows`, `cols`, `exact` and `evaluations`.
#[pyfunction]
#[pyo3(signature = (x, m, strategy = "auto", restarts = 8, iters = 20, seed = 0, principal = false))]
fn scan<'py>(
    py: Python<'py>,
    x: &Matrix,
    m: usize,
    strategy: &str,
    restarts: usize,
    iters: usize,
    seed: u64,
    principal: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = scan_config(m, strategy, restarts, iters, seed, principal)?;
    let res = scan_statistic(&x.inner, &cfg).map_err(to_py_err)?;
    let v = serde_json::json!({
        "value": res.value,
        "rows": res.rows.as_slice(),
        "cols": res.cols.as_slice(),
        "exact": res.exact,
        "evaluations": res.evaluations,
    });
    json_to_py(py, &v)
}

#[pyfunction]
#[pyo3(signature = (m, k, c_w = 8.0, restarts = 10, seed = 0))]
fn witness<'py>(
    py: Python<'py>,
    m: &Matrix,
    k: usize,
    c_w: f64,
    restarts: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let w = find_witness(&m.inner, k, c_w, restarts, RngSeed::new(seed)).map_err(to_py_err)?;
    serialize_to_py(py, &w)
}

#[pyfunction]
fn boundary<'py>(py: Python<'py>, p: usize, k: usize) -> PyResult<Bound<'py, PyAny>> {
    let b = boundary_curves(p, k).map_err(to_py_err)?;
    serialize_to_py(py, &b)
}

#[pyfunction(name = "beta_star")]
fn py_beta_star(alpha: f64) -> f64 {
    beta_star(alpha)
}

#[pyfunction]
fn mgf_gh(p: usize, m: usize, t: f64) -> PyResult<f64> {
    mgf_gh_exact(p, m, t).map_err(to_py_err)
}

#[pyfunction]
fn mgf_h(p: usize, m: usize, lam: f64) -> PyResult<f64> {
    mgf_h_exact(p, m, lam).map_err(to_py_err)
}

/// Exact chi-square divergence of the least-favorable mixture from pure noise.
#[pyfunction]
fn chi2_least_favorable(p: usize, m: usize, k: usize, t: f64) -> PyResult<f64> {
    chi2_least_favorable_exact(p, m, k, t).map(|e| e.value).map_err(to_py_err)
}

#[pyfunction]
fn chi2_upper_bound(p: usize, m: usize, k: usize, s: f64) -> PyResult<f64> {
    chi2_upper_bound_cs(p, m, k, s).map_err(to_py_err)
}

#[pyfunction]
fn tv_upper(chi2: f64) -> f64 {
    tv_upper_from_chi2(chi2)
}

/// `(value, std_error)` of `E[exp(⟨P, P̃⟩)]` over uniform permutations.
#[pyfunction]
#[pyo3(signature = (p, reps = 100_000, seed = 0))]
fn permutation_mgf_estimate(p: usize, reps: usize, seed: u64) -> PyResult<(f64, f64)> {
    permutation_mgf(p, reps, RngSeed::new(seed)).map(|e| (e.value, e.std_error)).map_err(to_py_err)
}

/// `(s_star, m_star)` maximized over every block size `k <= m <= p`.
#[pyfunction]
#[pyo3(signature = (p, k, c = 0.05))]
fn s_star(p: usize, k: usize, c: f64) -> PyResult<(f64, usize)> {
    if k == 0 || k > p {
        return Err(PyValueError::new_err(format!("need 1 <= k <= p, got k={k}, p={p}")));
    }
    let grid: Vec<usize> = (k..=p).collect();
    optimize_s_star(p, k, &grid, c).map(|s| (s.s_star, s.m_star)).map_err(to_py_err)
}

/// Runs an experiment described by a TOML string.
#[pyclass(name = "PhaseTable", module = "sparsedet_py", frozen)]
struct PyPhaseTable {
    inner: sparsedet::experiment::PhaseTable,
}

#[pymethods]
impl PyPhaseTable {
    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }

    /// Rows as a list of dicts keyed by the CSV column names.
    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serialize_to_py(py, &self.inner.rows)
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_phase_csv(&self.inner, &mut buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn to_svg(&self) -> String {
        render_phase_svg(&self.inner)
    }
}

#[pyfunction(name = "run_experiment")]
#[pyo3(signature = (config_toml, threads = None))]
fn py_run_experiment(py: Python<'_>, config_toml: &str, threads: Option<usize>) -> PyResult<PyPhaseTable> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(to_py_err)?;
    let table = py
        .detach(|| match threads {
            Some(n) => run_experiment_with_threads(&cfg, n),
            None => run_experiment(&cfg),
        })
        .map_err(to_py_err)?;
    Ok(PyPhaseTable { inner: table })
}

#[pymodule]
fn sparsedet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Matrix>()?;
    m.add_class::<PyPhaseTable>()?;
    m.add_function(wrap_pyfunction!(gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(block_signal, m)?)?;
    m.add_function(wrap_pyfunction!(prior_sample, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_test, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_scan_test, m)?)?;
    m.add_function(wrap_pyfunction!(cov_scan_test, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(witness, m)?)?;
    m.add_function(wrap_pyfunction!(boundary, m)?)?;
    m.add_function(wrap_pyfunction!(py_beta_star, m)?)?;
    m.add_function(wrap_pyfunction!(mgf_gh, m)?)?;
    m.add_function(wrap_pyfunction!(mgf_h, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_least_favorable, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(tv_upper, m)?)?;
    m.add_function(wrap_pyfunction!(permutation_mgf_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(s_star, m)?)?;
    m.add_function(wrap_pyfunction!(py_run_experiment, m)?)?;
    Ok(())
}
