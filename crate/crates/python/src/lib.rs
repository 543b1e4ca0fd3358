//! Python module `fkc`: config validation, simulation and sample metrics.

use std::path::Path;

use fkc_core::metrics::{
    default_scales, mmd_rbf, wasserstein_1d, wasserstein_2d, MmdEstimator, W2dMethod,
};
use fkc_core::{simulate as simulate_sde, SampleSet};
use fkc_harness::{parse_config, run_experiment, Experiment, HarnessError};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Validation { .. } => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn core_err(e: fkc_core::FkcError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sample_set(rows: Vec<Vec<f64>>) -> PyResult<SampleSet> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err(
            "every point must have the same dimension",
        ));
    }
    SampleSet::new(rows.concat(), dim).map_err(core_err)
}

/// Parses and validates a JSON config; returns its hash.
#[pyfunction]
fn validate(config: &str) -> PyResult<String> {
    let cfg = parse_config(config).map_err(py_err)?;
    Experiment::build(&cfg).map_err(py_err)?;
    cfg.hash().map_err(py_err)
}

/// Simulates a JSON config once and returns `(positions, log_weights, log_z)`.
#[pyfunction]
#[pyo3(signature = (config, seed=None))]
fn simulate(config: &str, seed: Option<u64>) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let cfg = parse_config(config).map_err(py_err)?;
    let exp = Experiment::build(&cfg).map_err(py_err)?;
    let mut sim = cfg.simulation.clone();
    if let Some(s) = seed {
        sim.seed = s;
    }
    let out = simulate_sde(&exp.sde, &sim, &cfg.resampling)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let ens = out.ensemble;
    let positions = (0..ens.len()).map(|k| ens.particle(k).to_vec()).collect();
    Ok((positions, ens.log_weights, out.log_z))
}

/// Runs `seeds` seeds into `out` like `fkc run`; returns the reports as JSON.
#[pyfunction]
#[pyo3(signature = (config, out, seeds=1))]
fn run(config: &str, out: &str, seeds: usize) -> PyResult<String> {
    let cfg = parse_config(config).map_err(py_err)?;
    let reports = run_experiment(&cfg, seeds, Path::new(out)).map_err(py_err)?;
    serde_json::to_string(&reports).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Unbiased multi-scale RBF MMD; bandwidths default to the median heuristic.
#[pyfunction]
#[pyo3(signature = (a, b, scales=None))]
fn mmd(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, scales: Option<Vec<f64>>) -> PyResult<f64> {
    let (a, b) = (sample_set(a)?, sample_set(b)?);
    let scales = match scales {
        Some(s) => s,
        None => default_scales(&a, &b).map_err(core_err)?,
    };
    mmd_rbf(&a, &b, &scales, MmdEstimator::Unbiased).map_err(core_err)
}

/// `W_p` between uniform point sets in one or two dimensions.
#[pyfunction]
#[pyo3(signature = (a, b, p=2.0))]
fn wasserstein(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, p: f64) -> PyResult<f64> {
    let (a, b) = (sample_set(a)?, sample_set(b)?);
    match a.dim() {
        1 => wasserstein_1d(&a, &b, p),
        _ => wasserstein_2d(&a, &b, p, W2dMethod::default()),
    }
    .map_err(core_err)
}

#[pymodule]
fn fkc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(mmd, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    Ok(())
}
