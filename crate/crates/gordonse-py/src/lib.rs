//! Python bindings. Algorithms are passed by name (`"am_pr"`, `"gd_pr"`,
//! `"am_mlr"`, `"subgrad_mlr"`), states as `StatePoint`.

use std::path::PathBuf;

use gordonse::analysis::{self, FitMode};
use gordonse::cli::{self, RateMode, RunConfig, Scale};
use gordonse::oracle::{self, OmegaSpec, Order};
use gordonse::scalarized_ao::{self as ao, AoInstance};
use gordonse::state_evolution::{self as se, SeKind};
use gordonse::{AlgorithmKind, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::NotConverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn alg(name: &str) -> PyResult<AlgorithmKind> {
    AlgorithmKind::parse(name).map_err(py_err)
}

#[pyclass(name = "StatePoint", frozen, eq, from_py_object)]
#[derive(Clone, Copy, PartialEq)]
pub struct PyStatePoint {
    #[pyo3(get)]
    alpha: f64,
    #[pyo3(get)]
    beta: f64,
}

impl From<se::StatePoint> for PyStatePoint {
    fn from(s: se::StatePoint) -> Self {
        Self { alpha: s.alpha, beta: s.beta }
    }
}

impl PyStatePoint {
    fn inner(&self) -> se::StatePoint {
        se::StatePoint { alpha: self.alpha, beta: self.beta }
    }
}

#[pymethods]
impl PyStatePoint {
    #[new]
    fn new(alpha: f64, beta: f64) -> PyResult<Self> {
        se::StatePoint::new(alpha, beta).map(Into::into).map_err(py_err)
    }

    fn phi(&self) -> f64 {
        self.inner().phi()
    }

    fn rho(&self) -> f64 {
        self.inner().rho()
    }

    fn d_l2(&self) -> f64 {
        analysis::d_l2(self.inner())
    }

    fn d_angle(&self) -> f64 {
        analysis::d_angle(self.inner())
    }

    fn in_good_region(&self) -> bool {
        analysis::in_good_region(self.inner())
    }

    fn __repr__(&self) -> String {
        format!("StatePoint(alpha={}, beta={})", self.alpha, self.beta)
    }
}

/// Gordon (finite κ) or population (κ = ∞) state-evolution operator.
#[pyclass(name = "SeOperator", frozen)]
pub struct PySeOperator(se::SeOperator);

#[pymethods]
impl PySeOperator {
    #[new]
    #[pyo3(signature = (algorithm, sigma, kappa=None, eta=0.5))]
    fn new(algorithm: &str, sigma: f64, kappa: Option<f64>, eta: f64) -> PyResult<Self> {
        let k = alg(algorithm)?;
        Ok(Self(match kappa {
            Some(kappa) => se::SeOperator::gordon(k, sigma, kappa, eta),
            None => se::SeOperator::population(k, sigma, eta),
        }))
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.0.kind {
            SeKind::Gordon => "gordon",
            SeKind::Population => "population",
        }
    }

    /// First-order step size above 1/2 (outside the validated range).
    #[getter]
    fn advisory(&self) -> bool {
        self.0.advisory()
    }

    fn apply(&self, state: PyStatePoint) -> PyResult<PyStatePoint> {
        self.0.apply(state.inner()).map(Into::into).map_err(py_err)
    }

    /// States `s_0, …, s_T`.
    fn iterate(&self, state: PyStatePoint, iterations: usize) -> PyResult<Vec<PyStatePoint>> {
        se::iterate_se(&self.0, state.inner(), iterations)
            .map(|v| v.into_iter().map(Into::into).collect())
            .map_err(py_err)
    }
}

/// Monte-Carlo `(E[Ω²], E[Z₁Ω], E[Z₂Ω])` and their standard errors.
#[pyfunction]
#[pyo3(signature = (algorithm, state, sigma, samples=1_000_000, seed=0))]
fn estimate_expectations(
    algorithm: &str,
    state: PyStatePoint,
    sigma: f64,
    samples: usize,
    seed: u64,
) -> PyResult<((f64, f64, f64), (f64, f64, f64))> {
    let k = alg(algorithm)?;
    let spec = OmegaSpec { weight: k.weight(), model: k.model(), sigma, state: state.inner() };
    let e = oracle::estimate_expectations(&spec, samples, seed).map_err(py_err)?;
    let m = e.moments;
    Ok(((m.e_omega2, m.e_z1_omega, m.e_z2_omega), (e.stderr[0], e.stderr[1], e.stderr[2])))
}

/// Expanded Gordon update `(α, μ, ν)`: closed form and Monte-Carlo with
/// standard errors.
#[pyfunction]
#[pyo3(signature = (algorithm, state, sigma, kappa, eta=0.5, samples=1_000_000, seed=0))]
fn gordon_expanded<'py>(
    py: Python<'py>,
    algorithm: &str,
    state: PyStatePoint,
    sigma: f64,
    kappa: f64,
    eta: f64,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let k = alg(algorithm)?;
    let s = state.inner();
    let spec = OmegaSpec { weight: k.weight(), model: k.model(), sigma, state: s };
    let (order, cf) = if k.is_first_order() {
        (Order::FirstOrder, se::gordon_expanded_fo(s, k.weight(), k.model(), sigma, kappa, eta))
    } else {
        (Order::HigherOrder, se::gordon_expanded_ho(s, k.weight(), k.model(), sigma, kappa))
    };
    let cf = cf.map_err(py_err)?;
    let mc = oracle::gordon_from_oracle(&spec, kappa, order, eta, samples, seed).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("closed_form", (cf.alpha, cf.mu, cf.nu))?;
    d.set_item("mc_estimate", (mc.state.alpha, mc.state.mu, mc.state.nu))?;
    d.set_item("stderr", (mc.stderr[0], mc.stderr[1], mc.stderr[2]))?;
    d.set_item("beta", (cf.beta(), mc.beta, mc.beta_stderr))?;
    Ok(d)
}

/// Closed-form minimizer of a sampled scalarized auxiliary loss, plus the
/// numeric cross-check; returns `((α, μ, ν), τ, (α, μ, ν) numeric)`.
#[pyfunction]
#[pyo3(signature = (algorithm, state, sigma, n, d, seed=0, trial=0))]
fn scalarized_ao(
    algorithm: &str,
    state: PyStatePoint,
    sigma: f64,
    n: usize,
    d: usize,
    seed: u64,
    trial: u64,
) -> PyResult<((f64, f64, f64), f64, (f64, f64, f64))> {
    let k = alg(algorithm)?;
    let spec = OmegaSpec { weight: k.weight(), model: k.model(), sigma, state: state.inner() };
    let inst = AoInstance::sample_keyed(&spec, n, d, seed, trial).map_err(py_err)?;
    let sol = ao::ho_minimizer(&inst).map_err(py_err)?;
    let num = ao::numeric_3var_check(&inst).map_err(py_err)?;
    Ok(((sol.xi.alpha, sol.xi.mu, sol.xi.nu), sol.tau, (num.alpha, num.mu, num.nu)))
}

/// Run a `key=value` configuration; returns per-trial `(alpha, beta)` arrays
/// and the Gordon/population predictions. Nothing is written to disk.
#[pyfunction]
fn simulate<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RunConfig::parse(config).map_err(py_err)?;
    let out = py.detach(|| cli::simulate(&cfg)).map_err(py_err)?;
    let pairs = |v: &[se::StatePoint]| v.iter().map(|s| (s.alpha, s.beta)).collect::<Vec<_>>();
    let d = PyDict::new(py);
    d.set_item("trials", out.trials.iter().map(|t| pairs(&t.states())).collect::<Vec<_>>())?;
    d.set_item("gordon", out.gordon.as_deref().map(pairs))?;
    d.set_item("population", out.population.as_deref().map(pairs))?;
    if let Some(r) = &out.report {
        d.set_item("mean_max_deviation_d_l2", r.mean_max(2))?;
    }
    Ok(d)
}

/// Fit `e_{t+1} ≈ C e_t^λ`; `mode` is `"raw"`, `"excess"` or `"auto"`.
#[pyfunction]
#[pyo3(signature = (errors, mode="auto"))]
fn fit_rate<'py>(py: Python<'py>, errors: Vec<f64>, mode: &str) -> PyResult<Bound<'py, PyDict>> {
    let mode = match mode {
        "raw" => RateMode::Raw,
        "excess" => RateMode::Excess,
        "auto" => RateMode::Auto,
        other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
    };
    let f = cli::fit_with_mode(&errors, mode).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("lambda", f.exponent_lambda)?;
    d.set_item("coefficient", f.coefficient)?;
    d.set_item("floor", f.floor)?;
    d.set_item("r_squared", f.r_squared)?;
    d.set_item("pairs", f.pairs)?;
    d.set_item("mode", if f.mode == FitMode::Raw { "raw" } else { "excess" })?;
    d.set_item("label", f.label().map(|l| format!("{l:?}").to_lowercase()))?;
    Ok(d)
}

/// Writes `figure_<id>.csv` and `.svg` into `out`; returns the CSV path.
#[pyfunction]
#[pyo3(signature = (figure, out, scale="desk", seed=0))]
fn reproduce_figure(py: Python<'_>, figure: &str, out: PathBuf, scale: &str, seed: u64) -> PyResult<PathBuf> {
    let scale = Scale::parse(scale).map_err(py_err)?;
    let fig = py.detach(|| cli::cmd_reproduce_figure(figure, scale, seed, &out)).map_err(py_err)?;
    Ok(out.join(format!("figure_{}.csv", fig.spec.id)))
}

/// All grid properties and identities as `(group, name, passed, value)`.
#[pyfunction]
fn property_suite(py: Python<'_>) -> PyResult<Vec<(String, String, bool, f64)>> {
    let rows = py.detach(|| cli::property_suite(Vec::new())).map_err(py_err)?;
    Ok(rows.into_iter().map(|r| (r.group.to_string(), r.name, r.passed, r.value)).collect())
}

#[pymodule(name = "gordonse")]
pub fn gordonse_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStatePoint>()?;
    m.add_class::<PySeOperator>()?;
    m.add_function(wrap_pyfunction!(estimate_expectations, m)?)?;
    m.add_function(wrap_pyfunction!(gordon_expanded, m)?)?;
    m.add_function(wrap_pyfunction!(scalarized_ao, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce_figure, m)?)?;
    m.add_function(wrap_pyfunction!(property_suite, m)?)?;
    m.add("ALGORITHMS", AlgorithmKind::ALL.iter().map(|a| a.name()).collect::<Vec<_>>())?;
    m.add("FIGURES", cli::FIGURE_IDS.to_vec())?;
    Ok(())
}
