use gumlab::alloc::AllocationRule;
use gumlab::config::parse_config;
use gumlab::dist::{self, Distribution};
use gumlab::poa;
use gumlab::sim;
use gumlab::targets::{self, TargetQuery};
use gumlab::tu;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A value prior, built from a literal such as `uniform:2,14` or `point:8`.
#[pyclass(name = "Distribution", module = "gumlab_py", frozen)]
#[derive(Clone)]
struct PyDistribution {
    inner: Distribution,
}

#[pymethods]
impl PyDistribution {
    #[new]
    fn new(literal: &str) -> PyResult<Self> {
        literal.parse().map(|inner| Self { inner }).map_err(err)
    }

    fn support(&self) -> (f64, f64) {
        self.inner.support()
    }

    fn expectation(&self) -> f64 {
        self.inner.expectation()
    }

    fn cdf(&self, v: f64) -> f64 {
        self.inner.cdf(v)
    }

    fn quantile(&self, u: f64) -> PyResult<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(PyValueError::new_err("quantile level must lie in [0, 1]"));
        }
        Ok(self.inner.quantile(u))
    }

    fn split(&self, k: u32) -> PyResult<Self> {
        self.inner.split(k).map(|inner| Self { inner }).map_err(err)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Distribution('{}')", self.inner)
    }
}

fn unwrap_priors(priors: &[PyDistribution]) -> Vec<Distribution> {
    priors.iter().map(|p| p.inner.clone()).collect()
}

/// Externality mechanism over ascending player order.
///
/// `rule` is `argmax`, `linear` (with `coeffs`) or `quantile-power` (with `coeffs` as weights).
#[pyclass(name = "Mechanism", module = "gumlab_py", frozen)]
struct PyMechanism {
    inner: tu::Mechanism,
}

#[pymethods]
impl PyMechanism {
    #[new]
    #[pyo3(signature = (priors, rule = "argmax", coeffs = None))]
    fn new(priors: Vec<PyDistribution>, rule: &str, coeffs: Option<Vec<f64>>) -> PyResult<Self> {
        let n = priors.len();
        let rule = match (rule, coeffs) {
            ("argmax", None) => AllocationRule::argmax(n),
            ("linear", Some(c)) => AllocationRule::linear_scaled(c).map_err(err)?,
            ("quantile-power", Some(w)) => AllocationRule::quantile_power(w).map_err(err)?,
            (r, _) => return Err(PyValueError::new_err(format!("unknown rule or missing coefficients: {r}"))),
        };
        let inner = tu::Mechanism::ascending(rule, unwrap_priors(&priors)).map_err(err)?;
        Ok(Self { inner })
    }

    /// Expected utility of each player when nothing has been revealed.
    fn baseline(&self) -> Vec<f64> {
        self.inner.baseline().to_vec()
    }

    /// Transfers `y` for a full report profile, with additive constants `kappa`.
    #[pyo3(signature = (reports, kappa = None))]
    fn payments(&self, reports: Vec<f64>, kappa: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let kappa = kappa.unwrap_or_else(|| vec![0.0; reports.len()]);
        self.inner.payments(&reports, &kappa).map(|o| o.y).map_err(err)
    }

    /// Externality matrix as nested lists, row `i` holding `gamma^{i->j}`.
    fn externalities(&self, reports: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let n = reports.len();
        let reports: Vec<Option<f64>> = reports.into_iter().map(Some).collect();
        let g = self.inner.externalities(&reports).map_err(err)?;
        Ok((0..n).map(|i| (0..n).map(|j| g.get(i, j)).collect()).collect())
    }

    #[pyo3(signature = (i, opponents, kappa = None))]
    fn interim_utility(&self, i: usize, opponents: Vec<f64>, kappa: Option<Vec<f64>>) -> PyResult<f64> {
        let kappa = kappa.unwrap_or_else(|| vec![0.0; opponents.len()]);
        self.inner.interim_utility(&opponents, &kappa, i).map_err(err)
    }
}

#[pyfunction]
fn fair_floor(d: &PyDistribution, n: usize) -> PyResult<f64> {
    targets::fair_floor(&d.inner, n).map_err(err)
}

#[pyfunction]
fn expected_max(priors: Vec<PyDistribution>) -> PyResult<f64> {
    dist::expected_max(&unwrap_priors(&priors)).map_err(err)
}

#[pyfunction]
fn phi(alpha: f64, d: &PyDistribution) -> PyResult<f64> {
    targets::phi(alpha, &d.inner).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (alpha, d, periods = 1))]
fn f_star(alpha: f64, d: &PyDistribution, periods: u64) -> PyResult<f64> {
    targets::f_star(&TargetQuery::new(alpha, d.inner.clone(), periods).map_err(err)?).map_err(err)
}

/// Critical lambda and its value at half the step size.
#[pyfunction]
#[pyo3(signature = (tol = 1e-4))]
fn critical_lambda(py: Python<'_>, tol: f64) -> PyResult<(f64, f64)> {
    py.allow_threads(|| poa::critical_lambda(tol)).map(|c| (c.value, c.halved)).map_err(err)
}

/// Run a configured experiment and return the summary as a JSON string.
#[pyfunction]
#[pyo3(signature = (config_text, seed = None, reps = None, periods = None))]
fn run_experiment(py: Python<'_>, config_text: &str, seed: Option<u64>, reps: Option<u64>, periods: Option<u64>) -> PyResult<String> {
    let mut cfg = parse_config(config_text).map_err(err)?;
    if let Some(t) = periods {
        cfg.periods = t;
    }
    let seed = seed.unwrap_or(cfg.seed);
    let reps = reps.unwrap_or(cfg.reps);
    py.allow_threads(|| sim::run_experiment(&cfg, seed, reps)).map(|s| s.to_json()).map_err(err)
}

#[pymodule]
fn gumlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDistribution>()?;
    m.add_class::<PyMechanism>()?;
    m.add_function(wrap_pyfunction!(fair_floor, m)?)?;
    m.add_function(wrap_pyfunction!(expected_max, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(f_star, m)?)?;
    m.add_function(wrap_pyfunction!(critical_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
