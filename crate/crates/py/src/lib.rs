//! Python bindings for the cascade BO library.

use cascade_bo::acq_ci;
use cascade_bo::acq_ei::ei_scalar;
use cascade_bo::benchmarks;
use cascade_bo::gp::{KernelKind, KernelSpec};
use cascade_bo::harness::{self, RunConfig};
use cascade_bo::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) | Error::Unsupported(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Closed-form expected improvement of `N(mu, sigma²)` over `f_best`.
#[pyfunction]
fn ei(mu: f64, sigma: f64, f_best: f64) -> f64 {
    ei_scalar(mu, sigma, f_best)
}

/// Gaussian kernel between `p` and `q`, each laid out as `[w..., x...]`.
#[pyfunction]
fn gaussian_kernel(
    amplitude: f64,
    w_lengthscales: Vec<f64>,
    x_lengthscales: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
) -> PyResult<f64> {
    let k = KernelSpec::gaussian(amplitude, w_lengthscales, x_lengthscales).map_err(to_py)?;
    k.eval(&p, &q).map_err(to_py)
}

/// Lipschitz bound of the posterior std for an isotropic kernel; Gaussian when `nu` is None.
#[pyfunction]
#[pyo3(signature = (amplitude, lengthscale, dim, nu=None))]
fn sigma_lipschitz_bound(amplitude: f64, lengthscale: f64, dim: usize, nu: Option<f64>) -> PyResult<f64> {
    let kind = match nu {
        Some(nu) => KernelKind::Matern { nu },
        None => KernelKind::GaussianArd,
    };
    let k = KernelSpec::new(kind, amplitude, vec![], vec![lengthscale; dim]).map_err(to_py)?;
    acq_ci::sigma_lipschitz_bound(&k).map_err(to_py)
}

/// Regret-bound constants as a dict.
#[pyfunction]
fn regret_constants(py: Python<'_>, n_stages: usize, lf: f64, l_sigma: f64, beta_sqrt: f64) -> PyResult<Py<PyAny>> {
    let c = acq_ci::regret_constants(n_stages, lf, l_sigma, beta_sqrt).map_err(to_py)?;
    let d = pyo3::types::PyDict::new(py);
    for (k, v) in [("c0", c.c0), ("c1", c.c1), ("c2", c.c2), ("c3", c.c3), ("c4", c.c4), ("l_sigma", c.l_sigma)] {
        d.set_item(k, v)?;
    }
    d.set_item("overflow", c.overflow)?;
    Ok(d.into_any().unbind())
}

#[pyfunction]
fn list_benchmarks() -> Vec<String> {
    benchmarks::registry().into_iter().map(|s| s.name).collect()
}

/// Runs one full cascade; returns `(final value, intermediate outputs)`.
#[pyfunction]
fn evaluate(benchmark: &str, seed: u64, controls: Vec<Vec<f64>>) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let b = benchmarks::build(benchmark, seed).map_err(to_py)?;
    let out = b.cascade.eval_cascade(&controls).map_err(to_py)?;
    Ok((out.value, out.intermediates))
}

/// Runs an experiment from TOML text and returns the summary as JSON.
/// Outputs are written to `out_dir` when given.
#[pyfunction]
#[pyo3(signature = (config_toml, out_dir=None))]
fn run(py: Python<'_>, config_toml: &str, out_dir: Option<std::path::PathBuf>) -> PyResult<String> {
    let cfg = RunConfig::from_toml(config_toml).map_err(to_py)?;
    let trace = py.detach(|| harness::run(&cfg)).map_err(to_py)?;
    if let Some(dir) = out_dir {
        harness::write_outputs(&trace, &dir).map_err(to_py)?;
    }
    serde_json::to_string(&trace.summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn cascade_bo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(ei, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_lipschitz_bound, m)?)?;
    m.add_function(wrap_pyfunction!(regret_constants, m)?)?;
    m.add_function(wrap_pyfunction!(list_benchmarks, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
