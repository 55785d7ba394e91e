//! Python bindings: cluster schemes and the CGM estimator, θ inference,
//! simulators, Monte Carlo studies and the normal-approximation bounds.
//!
//! Structured results are returned as plain dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use mwclust::cluster::{build_index, ClusterScheme as CoreScheme, NeighborhoodIndex, WeightedSample};
use mwclust::dgp::{DgpSpec, Grid, RegressionDesign, Simulator as CoreSimulator, Variant};
use mwclust::diagnostics::leverage_l;
use mwclust::linalg::Matrix;
use mwclust::mc::{run_consistency, run_coverage, McOptions, Target};
use mwclust::regression::{intercept, theta_inference, InferenceOptions, RegressionData};
use mwclust::stein::{wasserstein_bound_for, BoundMethod, DEFAULT_BOUND_REPS};
use mwclust::variance::{cgm_demeaned_with, cgm_with, psd_project, CgmMethod, CgmOptions};

create_exception!(pymwclust, MwclustError, PyValueError);

fn err(e: impl std::fmt::Display) -> PyErr {
    MwclustError::new_err(e.to_string())
}

/// Parses a kebab-case name into a serde enum.
fn parse_name<T: DeserializeOwned>(name: &str, what: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| err(format!("unknown {what} `{name}`")))
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn labels(values: &[Bound<'_, PyAny>]) -> PyResult<Vec<String>> {
    values.iter().map(|v| Ok(v.str()?.to_string())).collect()
}

/// Two-way cluster membership. Labels may be any values; they are compared by `str()`.
#[pyclass(module = "pymwclust", frozen)]
struct ClusterScheme {
    scheme: CoreScheme,
    index: NeighborhoodIndex,
}

#[pymethods]
impl ClusterScheme {
    #[new]
    #[pyo3(signature = (g, h, names = None))]
    fn new(g: Vec<Bound<'_, PyAny>>, h: Vec<Bound<'_, PyAny>>, names: Option<(String, String)>) -> PyResult<Self> {
        let (gn, hn) = names.unwrap_or_else(|| ("G".into(), "H".into()));
        let scheme = CoreScheme::from_labels(vec![(gn, labels(&g)?), (hn, labels(&h)?)]).map_err(err)?;
        let index = build_index(&scheme).map_err(err)?;
        Ok(Self { scheme, index })
    }

    #[getter]
    fn n(&self) -> usize {
        self.scheme.n()
    }

    #[getter]
    fn dims(&self) -> Vec<String> {
        self.scheme.dims().to_vec()
    }

    fn num_clusters(&self, dim: usize) -> PyResult<usize> {
        if dim > 1 {
            return Err(err(format!("dimension {dim} out of range")));
        }
        Ok(self.scheme.num_clusters(dim))
    }

    /// Observations sharing a cluster with `i` on either dimension, including `i`.
    fn neighborhood(&self, i: usize) -> PyResult<Vec<usize>> {
        self.index.neighborhood(i).map_err(err)
    }

    /// L_C per dimension for the given weights.
    fn leverage(&self, weights: Vec<f64>) -> PyResult<(f64, f64)> {
        let [a, b] = leverage_l(&self.index, &weights).map_err(err)?;
        Ok((a, b))
    }

    /// Q̂ for rows of `values` (a list of floats or of equal-length lists).
    #[pyo3(signature = (values, weights = None, method = "pair-enum", demean = false, dof_correction = false, psd = false))]
    fn cgm(
        &self,
        values: Bound<'_, PyAny>,
        weights: Option<Vec<f64>>,
        method: &str,
        demean: bool,
        dof_correction: bool,
        psd: bool,
    ) -> PyResult<Vec<Vec<f64>>> {
        let rows: Vec<Vec<f64>> = match values.extract::<Vec<f64>>() {
            Ok(v) => v.into_iter().map(|x| vec![x]).collect(),
            Err(_) => values.extract()?,
        };
        let w = Matrix::from_rows(&rows).map_err(err)?;
        let omega = weights.unwrap_or_else(|| vec![1.0; w.rows()]);
        let sample = WeightedSample::new(w, omega).map_err(err)?;
        let opts = CgmOptions { method: parse_name::<CgmMethod>(method, "method")?, dof_correction };
        let mut est = if demean {
            cgm_demeaned_with(&sample, &self.index, opts).map_err(err)?.1
        } else {
            cgm_with(&sample, &self.index, opts).map_err(err)?
        };
        if psd {
            est = psd_project(&est).map_err(err)?;
        }
        Ok(est.q_hat.to_rows())
    }

    fn __repr__(&self) -> String {
        let d = self.scheme.dims();
        format!(
            "ClusterScheme(n={}, {}={}, {}={})",
            self.scheme.n(),
            d[0],
            self.scheme.num_clusters(0),
            d[1],
            self.scheme.num_clusters(1)
        )
    }
}

/// θ̂ and its two-way cluster-robust standard error for y = θ d + controls′β + u.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (y, d, scheme, controls = None, add_intercept = true, psd_project = false, dof_correction = false))]
fn estimate(
    py: Python<'_>,
    y: Vec<f64>,
    d: Vec<f64>,
    scheme: &ClusterScheme,
    controls: Option<Vec<Vec<f64>>>,
    add_intercept: bool,
    psd_project: bool,
    dof_correction: bool,
) -> PyResult<Py<PyAny>> {
    let n = y.len();
    let mut columns = Vec::new();
    if add_intercept {
        columns.push(intercept(n).column(0));
    }
    columns.extend(controls.unwrap_or_default());
    let controls =
        if columns.is_empty() { Matrix::zeros(n, 0) } else { Matrix::from_columns(&columns).map_err(err)? };
    let data = RegressionData::new(y, d, controls, scheme.scheme.clone()).map_err(err)?;
    let fit = theta_inference(&data, &scheme.index, InferenceOptions { psd_project, dof_correction }).map_err(err)?;
    to_py(py, &fit)
}

/// A simulated two-way process with its exact moments.
#[pyclass(module = "pymwclust", frozen)]
struct Simulator {
    sim: CoreSimulator,
}

#[pymethods]
impl Simulator {
    /// `variant` is one of additive-re, interactive-chaos, iid-conservative,
    /// nonzero-mean-triple. `m` is the grid size (triple copies for triples).
    #[new]
    #[pyo3(signature = (variant, m = 10, cell_size = 1, seed = 0, regression = false))]
    fn new(variant: &str, m: usize, cell_size: usize, seed: u64, regression: bool) -> PyResult<Self> {
        let variant: Variant = parse_name(variant, "variant")?;
        let grid = match variant {
            Variant::NonzeroMeanTriple => Grid::Triples { copies: m },
            _ => Grid::Balanced { m, cell_size },
        };
        let mut spec = DgpSpec::new(variant, grid).with_seed(seed);
        if regression {
            spec = spec.with_regression(RegressionDesign::default());
        }
        Ok(Self { sim: CoreSimulator::new(spec).map_err(err)? })
    }

    /// Builds a simulator from the TOML form of a `[dgp]` table.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let spec: DgpSpec = toml::from_str(text).map_err(err)?;
        Ok(Self { sim: CoreSimulator::new(spec).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.sim.index().n()
    }

    /// Var(Σ W_i).
    #[getter]
    fn true_q(&self) -> f64 {
        self.sim.oracle().true_q
    }

    /// Σ_iΣ_{j∈𝒩_i} E[W_i]E[W_j].
    #[getter]
    fn bias_term(&self) -> f64 {
        self.sim.oracle().true_bias_term()
    }

    #[getter]
    fn true_mean(&self) -> Vec<f64> {
        self.sim.oracle().true_mean.clone()
    }

    #[getter]
    fn labels(&self) -> (Vec<usize>, Vec<usize>) {
        (self.sim.scheme().labels(0).to_vec(), self.sim.scheme().labels(1).to_vec())
    }

    fn scheme(&self) -> PyResult<ClusterScheme> {
        let scheme = self.sim.scheme().clone();
        let index = build_index(&scheme).map_err(err)?;
        Ok(ClusterScheme { scheme, index })
    }

    /// Outcome values W for replication `rep`.
    fn draw(&self, rep: u64) -> Vec<f64> {
        self.sim.draw_values(rep)
    }

    /// (y, d) for replication `rep`; requires a regression design.
    fn draw_regression(&self, rep: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let draw = self.sim.generate(rep).map_err(err)?;
        let data = draw.regression.ok_or_else(|| err("simulator has no regression design"))?;
        Ok((data.y().to_vec(), data.d().to_vec()))
    }

    /// Coverage study; `target` is mean, mean-demeaned or regression-theta.
    #[pyo3(signature = (reps = 1000, seed = None, target = "mean", threads = None))]
    fn coverage(
        &self,
        py: Python<'_>,
        reps: usize,
        seed: Option<u64>,
        target: &str,
        threads: Option<usize>,
    ) -> PyResult<Py<PyAny>> {
        let target = match target {
            "mean" => Target::Mean { demeaned: false },
            "mean-demeaned" => Target::Mean { demeaned: true },
            "regression-theta" => Target::RegressionTheta,
            other => return Err(err(format!("unknown target `{other}`"))),
        };
        let opts = McOptions { threads, ..McOptions::new(reps, seed.unwrap_or(self.sim.spec().seed)) };
        let spec = self.sim.spec().clone();
        let report = py.detach(|| run_coverage(&spec, target, opts)).map_err(err)?;
        to_py(py, &report)
    }

    /// Q̂/Q ratios across grid sizes `sweep`.
    #[pyo3(signature = (sweep, reps = 500, seed = None, threads = None))]
    fn consistency(
        &self,
        py: Python<'_>,
        sweep: Vec<usize>,
        reps: usize,
        seed: Option<u64>,
        threads: Option<usize>,
    ) -> PyResult<Py<PyAny>> {
        let opts = McOptions { threads, ..McOptions::new(reps, seed.unwrap_or(self.sim.spec().seed)) };
        let spec = self.sim.spec().clone();
        let report = py.detach(|| run_consistency(&spec, &sweep, opts)).map_err(err)?;
        to_py(py, &report)
    }

    /// Wasserstein and Kolmogorov bounds; `method` is analytic or monte-carlo.
    #[pyo3(signature = (method = "analytic", reps = DEFAULT_BOUND_REPS))]
    fn bound(&self, py: Python<'_>, method: &str, reps: usize) -> PyResult<Py<PyAny>> {
        let method = match method {
            "analytic" => BoundMethod::Analytic,
            "monte-carlo" => BoundMethod::MonteCarlo { reps },
            other => return Err(err(format!("unknown method `{other}`"))),
        };
        let report = py.detach(|| wasserstein_bound_for(&self.sim, method)).map_err(err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Simulator(variant={:?}, n={}, seed={})", self.sim.spec().variant, self.n(), self.sim.spec().seed)
    }
}

/// (2/π)^{1/4} √d_W.
#[pyfunction]
fn kolmogorov_bound(d_w: f64) -> PyResult<f64> {
    mwclust::stein::kolmogorov_bound(d_w).map_err(err)
}

/// Runs the command line with `args` (without the program name); returns (exit code, stdout, stderr).
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> (i32, String, String) {
    py.detach(|| {
        let (mut out, mut errs) = (Vec::new(), Vec::new());
        let argv = std::iter::once("mwclust".to_string()).chain(args);
        let code = mwclust::cli::run(argv, &mut out, &mut errs);
        (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&errs).into_owned())
    })
}

#[pymodule]
fn pymwclust(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MwclustError", m.py().get_type::<MwclustError>())?;
    m.add_class::<ClusterScheme>()?;
    m.add_class::<Simulator>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(kolmogorov_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
