//! Python bindings: metric spaces, Markov chains, Prohorov distances, regime
//! budgets, the counterexample verifiers and the ball-walk helpers.

use chainapprox::ballwalk;
use chainapprox::chain::{self, PairSelection, TAU1_THRESHOLD};
use chainapprox::counterexamples::{self, Family};
use chainapprox::metric::{Distribution, FiniteMetricSpace, Point};
use chainapprox::{prohorov, regime, Error, FiniteMarkovChain};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        Error::HorizonExceeded { .. } | Error::NonErgodic(_) | Error::RestartLimit(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn value_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            _ if n.is_f64() => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
            (Some(u), _) => u.into_pyobject(py)?.into_any(),
            (_, Some(i)) => i.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(value_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, value_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

/// A serialisable report as a Python dict.
fn report<'py, T: Serialize>(py: Python<'py>, r: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(r).map_err(|e| PyValueError::new_err(e.to_string()))?;
    value_to_py(py, &v)
}

fn law(weights: Vec<f64>) -> PyResult<Distribution> {
    Distribution::new(weights).map_err(to_py_err)
}

/// A finite metric space, Euclidean from coordinates or given by a matrix.
#[pyclass(name = "MetricSpace", frozen)]
struct PyMetricSpace {
    inner: FiniteMetricSpace,
}

#[pymethods]
impl PyMetricSpace {
    #[new]
    #[pyo3(signature = (coords, labels=None))]
    fn new(coords: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> PyResult<Self> {
        let inner = match labels {
            None => FiniteMetricSpace::euclidean(coords),
            Some(labels) if labels.len() == coords.len() => FiniteMetricSpace::from_points(
                labels
                    .into_iter()
                    .zip(coords)
                    .map(|(label, c)| Point { label, coords: Some(c) })
                    .collect(),
            ),
            Some(_) => return Err(PyValueError::new_err("labels and coords differ in length")),
        }
        .map_err(to_py_err)?;
        Ok(Self { inner })
    }

    /// A space given by an explicit distance matrix.
    #[staticmethod]
    fn from_matrix(matrix: Vec<Vec<f64>>) -> PyResult<Self> {
        let points = (0..matrix.len())
            .map(|i| Point { label: i.to_string(), coords: None })
            .collect();
        let inner = FiniteMetricSpace::from_matrix(points, matrix).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn dist(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.inner.len();
        if i >= n || j >= n {
            return Err(PyValueError::new_err(format!("index out of range for {n} points")));
        }
        Ok(self.inner.dist(i, j))
    }

    fn distance_matrix(&self) -> Vec<Vec<f64>> {
        self.inner.distance_matrix()
    }

    fn labels(&self) -> Vec<String> {
        self.inner.points().iter().map(|p| p.label.clone()).collect()
    }
}

type Cells = Vec<(usize, usize, f64)>;

/// `(value, witness)` where the witness lists `(i, j, mass)` cells of an
/// optimal coupling.
#[pyfunction]
#[pyo3(signature = (p, q, space, lam=1.0))]
fn prohorov_distance(
    p: Vec<f64>,
    q: Vec<f64>,
    space: &PyMetricSpace,
    lam: f64,
) -> PyResult<(f64, Cells)> {
    let r = prohorov::prohorov_distance(&law(p)?, &law(q)?, &space.inner, lam).map_err(to_py_err)?;
    let cells = r.witness_coupling.joint().iter().map(|c| (c.left, c.right, c.mass)).collect();
    Ok((r.value, cells))
}

/// Subset-enumeration reference value (at most 20 points).
#[pyfunction]
#[pyo3(signature = (p, q, space, lam=1.0))]
fn prohorov_bruteforce(p: Vec<f64>, q: Vec<f64>, space: &PyMetricSpace, lam: f64) -> PyResult<f64> {
    prohorov::prohorov_bruteforce(&law(p)?, &law(q)?, &space.inner, lam).map_err(to_py_err)
}

#[pyfunction]
fn tv_distance(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    prohorov::tv_distance(&law(p)?, &law(q)?).map_err(to_py_err)
}

/// A finite Markov chain on a metric space.
#[pyclass(name = "MarkovChain", frozen)]
struct PyMarkovChain {
    inner: FiniteMarkovChain,
}

#[pymethods]
impl PyMarkovChain {
    #[new]
    fn new(space: &PyMetricSpace, kernel: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = FiniteMarkovChain::from_dense(space.inner.clone(), kernel).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load_json(path: &str) -> PyResult<Self> {
        Ok(Self { inner: FiniteMarkovChain::load_json(path).map_err(to_py_err)? })
    }

    fn save_json(&self, path: &str) -> PyResult<()> {
        self.inner.save_json(path).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn space(&self) -> PyMetricSpace {
        PyMetricSpace { inner: self.inner.space().clone() }
    }

    fn kernel(&self) -> Vec<Vec<f64>> {
        self.inner.dense_kernel()
    }

    /// `P^t(x, .)`.
    fn t_step(&self, x: usize, t: usize) -> PyResult<Vec<f64>> {
        Ok(chain::t_step_distribution(&self.inner, x, t).map_err(to_py_err)?.into_weights())
    }

    #[pyo3(signature = (tol=1e-12))]
    fn stationary(&self, tol: f64) -> PyResult<Vec<f64>> {
        Ok(chain::stationary_distribution(&self.inner, tol).map_err(to_py_err)?.into_weights())
    }

    /// `(tau1, max-pair TV profile)`.
    #[pyo3(signature = (t_max=10_000, threshold=TAU1_THRESHOLD))]
    fn tau1(&self, t_max: usize, threshold: f64) -> PyResult<(usize, Vec<f64>)> {
        let v = chain::variation_threshold_time(&self.inner, t_max, threshold).map_err(to_py_err)?;
        Ok((v.tau1, v.profile))
    }

    /// Kernel Lipschitz constant over all pairs, or over the listed ones.
    #[pyo3(signature = (lam, pairs=None))]
    fn lipschitz(&self, lam: f64, pairs: Option<Vec<(usize, usize)>>) -> PyResult<f64> {
        let sel = pairs.map_or(PairSelection::All, PairSelection::Listed);
        chain::kernel_lipschitz_constant(&self.inner, lam, &sel).map_err(to_py_err)
    }
}

fn family(name: &str) -> PyResult<Family> {
    name.parse().map_err(to_py_err)
}

/// `(ideal, perturbed)` chains of a counterexample family.
#[pyfunction]
fn counterexample_pair(name: &str, n: usize) -> PyResult<(PyMarkovChain, PyMarkovChain)> {
    let pair = family(name)?.pair(n).map_err(to_py_err)?;
    Ok((PyMarkovChain { inner: pair.ideal }, PyMarkovChain { inner: pair.perturbed }))
}

#[pyfunction]
fn verify_regime_tightness<'py>(py: Python<'py>, name: &str, n: usize) -> PyResult<Bound<'py, PyAny>> {
    report(py, &counterexamples::verify_regime_tightness(family(name)?, n).map_err(to_py_err)?)
}

#[pyfunction]
#[pyo3(signature = (n, t, start=0))]
fn verify_divergent_separation<'py>(py: Python<'py>, n: usize, t: usize, start: usize) -> PyResult<Bound<'py, PyAny>> {
    report(py, &counterexamples::verify_divergent_separation(n, t, start).map_err(to_py_err)?)
}

#[pyfunction]
fn convergent_anchors<'py>(py: Python<'py>, n: usize) -> PyResult<Bound<'py, PyAny>> {
    report(py, &counterexamples::convergent_anchors(n).map_err(to_py_err)?)
}

#[pyfunction]
fn classify_regime(lam: f64, c: f64) -> PyResult<String> {
    Ok(regime::classify_regime(lam, c).map_err(to_py_err)?.to_string())
}

#[pyfunction]
fn t_epsilon(epsilon: f64, tau1: u64) -> PyResult<u64> {
    regime::t_epsilon(epsilon, tau1).map_err(to_py_err)
}

#[pyfunction]
fn delta_budget<'py>(py: Python<'py>, lam: f64, c: f64, epsilon: f64, tau1: u64) -> PyResult<Bound<'py, PyAny>> {
    report(py, &regime::delta_budget(lam, c, epsilon, tau1).map_err(to_py_err)?)
}

#[pyfunction]
fn ball_volume(n: usize, r: f64) -> f64 {
    ballwalk::ball_volume(n, r)
}

#[pyfunction]
fn lipschitz_bound(n: usize, r: f64) -> PyResult<f64> {
    ballwalk::lipschitz_bound(n, r).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (n, r, diameter, epsilon=0.1, tau1_constant=1.0, delta_constant=1.0))]
fn ballwalk_budgets<'py>(
    py: Python<'py>,
    n: usize,
    r: f64,
    diameter: f64,
    epsilon: f64,
    tau1_constant: f64,
    delta_constant: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let b = ballwalk::ballwalk_budgets(n, r, diameter, epsilon, tau1_constant, delta_constant).map_err(to_py_err)?;
    report(py, &b)
}

/// `count` uniform points of `B_n(0, r)` from the run stream `(seed, run)`.
#[pyfunction]
#[pyo3(signature = (n, r, count, seed=0, run=0))]
fn sample_ball_uniform(n: usize, r: f64, count: usize, seed: u64, run: u64) -> PyResult<Vec<Vec<f64>>> {
    let mut rng = chain::run_rng(seed, run);
    (0..count)
        .map(|_| ballwalk::sample_ball_uniform(n, r, &mut rng).map_err(to_py_err))
        .collect()
}

#[pymodule]
fn chainapprox_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMetricSpace>()?;
    m.add_class::<PyMarkovChain>()?;
    m.add("TAU1_THRESHOLD", TAU1_THRESHOLD)?;
    m.add_function(wrap_pyfunction!(prohorov_distance, m)?)?;
    m.add_function(wrap_pyfunction!(prohorov_bruteforce, m)?)?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_pair, m)?)?;
    m.add_function(wrap_pyfunction!(verify_regime_tightness, m)?)?;
    m.add_function(wrap_pyfunction!(verify_divergent_separation, m)?)?;
    m.add_function(wrap_pyfunction!(convergent_anchors, m)?)?;
    m.add_function(wrap_pyfunction!(classify_regime, m)?)?;
    m.add_function(wrap_pyfunction!(t_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(delta_budget, m)?)?;
    m.add_function(wrap_pyfunction!(ball_volume, m)?)?;
    m.add_function(wrap_pyfunction!(lipschitz_bound, m)?)?;
    m.add_function(wrap_pyfunction!(ballwalk_budgets, m)?)?;
    m.add_function(wrap_pyfunction!(sample_ball_uniform, m)?)?;
    Ok(())
}
