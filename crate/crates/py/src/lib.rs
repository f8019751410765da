//! Python bindings: the main types and operations of the caching model,
//! solver and simulator, for quick experiments from Python.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mfcache::bench;
use mfcache::cost;
use mfcache::params::CostParams;
use mfcache::policy::PolicyKind;
use mfcache::popularity;
use mfcache::solver;

fn to_py_err(e: mfcache::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Scalar model constants. Constructed with the reference defaults; any
/// field can be overridden by keyword.
#[pyclass(name = "Params", skip_from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: CostParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut p = CostParams::default();
        if let Some(kw) = overrides {
            for (key, value) in kw.iter() {
                let name: String = key.extract()?;
                let v: f64 = value.extract()?;
                match name.as_str() {
                    "file_size_bits" => p.file_size_bits = v,
                    "bandwidth_hz" => p.bandwidth_hz = v,
                    "tx_power_w" => p.tx_power_w = v,
                    "noise_w" => p.noise_w = v,
                    "fronthaul_rate_bps" => p.fronthaul_rate_bps = v,
                    "discard_base" => p.discard_base = v,
                    "eta" => p.retrieval_load_coeff = v,
                    "eta1" => p.caching_load_linear = v,
                    "eta2" => p.caching_load_quad = v,
                    "omega1" => p.delay_weight = v,
                    "omega2" => p.load_weight = v,
                    "cache_capacity_bits" => p.cache_capacity_bits = v,
                    other => {
                        return Err(PyValueError::new_err(format!("unknown parameter `{other}`")))
                    }
                }
            }
        }
        p.validate().map_err(to_py_err)?;
        Ok(PyParams { inner: p })
    }

    /// Request-driven discard rate e^(a-1) a^q.
    fn discard_rate(&self, requests: f64) -> f64 {
        self.inner.discard_rate(requests)
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(S={:.3e} bits, W={:.3e} Hz, C={:.3e} bits, a={})",
            self.inner.file_size_bits,
            self.inner.bandwidth_hz,
            self.inner.cache_capacity_bits,
            self.inner.discard_base
        )
    }
}

/// Rank-based popularity vector p_n ~ n^(-beta), normalized.
#[pyfunction]
fn zipf_probabilities(files: usize, beta: f64) -> PyResult<Vec<f64>> {
    popularity::zipf_probabilities(files, beta).map_err(to_py_err)
}

/// Net cache drift in bits per slot.
#[pyfunction]
fn cache_drift(s_bits: f64, rate: f64, requests: f64, params: &PyParams) -> f64 {
    cost::cache_drift(s_bits, rate, requests, &params.inner)
}

/// Closed-form minimizer of the Hamiltonian over the caching rate.
#[pyfunction]
fn optimal_control(dv_ds: f64, params: &PyParams) -> f64 {
    solver::optimal_control(dv_ds, &params.inner)
}

/// Weighted total cost omega1 * delay + omega2 * load.
#[pyfunction]
fn total_cost(delay_s: f64, load: f64, params: &PyParams) -> f64 {
    cost::total_cost(delay_s, load, &params.inner)
}

/// A solved feedback policy for a single file.
#[pyclass(name = "SolvedPolicy")]
struct PySolvedPolicy {
    solution: Arc<solver::MfgSolution>,
}

#[pymethods]
impl PySolvedPolicy {
    /// Iterations used per file.
    #[getter]
    fn iterations(&self) -> Vec<usize> {
        self.solution.iterations.clone()
    }

    /// Residual history of one file.
    fn residuals(&self, file: usize) -> PyResult<Vec<f64>> {
        self.solution
            .residuals
            .get(file)
            .cloned()
            .ok_or_else(|| PyValueError::new_err("file index out of range"))
    }

    #[getter]
    fn converged(&self) -> bool {
        self.solution.all_converged()
    }

    /// Caching rate at (slot, cache state in bits) for one file.
    fn control(&self, file: usize, slot: usize, s_bits: f64) -> PyResult<f64> {
        let grid = &self.solution.grid;
        let field = self
            .solution
            .policy
            .get(file)
            .ok_or_else(|| PyValueError::new_err("file index out of range"))?;
        let level = (slot as f64 / grid.dt_slots()).round() as usize;
        Ok(field.sample_state(level.min(grid.nt - 1), grid.position_of_bits(s_bits)))
    }

    /// Population density row (normalized over s in [0, 1]) of one file at a
    /// time level.
    fn density(&self, file: usize, level: usize) -> PyResult<Vec<f64>> {
        let field = self
            .solution
            .density
            .get(file)
            .ok_or_else(|| PyValueError::new_err("file index out of range"))?;
        if level >= field.nt {
            return Err(PyValueError::new_err("time level out of range"));
        }
        Ok(field.row(level).to_vec())
    }
}

/// Solve the coupled value/density fixed point for `files` independent files
/// over `slots` slots with per-file constant request expectations.
#[pyfunction]
#[pyo3(signature = (params, q_per_slot, slots, ns=101, own_rate_bps=1e7, alt_rate_bps=2e6))]
fn solve_policy(
    params: &PyParams,
    q_per_slot: Vec<f64>,
    slots: usize,
    ns: usize,
    own_rate_bps: f64,
    alt_rate_bps: f64,
) -> PyResult<PySolvedPolicy> {
    let grid = solver::Grid::per_slot(ns, slots, params.inner.file_size_bits).map_err(to_py_err)?;
    let config = solver::SolverConfig {
        max_iters: 200,
        tol: 1e-4,
        rho: 0.5,
        eps_diffusion: 0.0,
        kappa: 50.0,
        full_threshold_eps: 1e-3,
        max_substeps: 10_000,
        q_profile: q_per_slot
            .iter()
            .map(|&q| vec![q; grid.horizon_slots])
            .collect(),
    };
    let rates = mfcache::radio::MeanFieldRates {
        own_bps: own_rate_bps,
        alt_bps: alt_rate_bps,
    };
    let m0: Vec<Vec<f64>> = (0..q_per_slot.len())
        .map(|_| solver::spike_density(&grid, 0.0))
        .collect();
    let solution =
        solver::solve_mfg(&grid, &config, &params.inner, rates, &m0).map_err(to_py_err)?;
    Ok(PySolvedPolicy {
        solution: Arc::new(solution),
    })
}

/// Run a small end-to-end experiment from a config file and return the
/// per-policy summaries as dictionaries.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_path: &str) -> PyResult<Vec<Py<PyDict>>> {
    let config =
        mfcache::config::ExperimentConfig::load(std::path::Path::new(config_path)).map_err(to_py_err)?;
    let run_seed = mfcache::config::derive_seed(config.run.master_seed, "run", 0);
    let world = bench::build_world(
        &config,
        config.topology.ifd_m,
        config.popularity.beta,
        config.run.slots,
        run_seed,
    )
    .map_err(to_py_err)?;
    let grid = solver::Grid::per_slot(
        config.solver.ns,
        config.run.slots,
        world.params.file_size_bits,
    )
    .map_err(to_py_err)?;
    let kinds = config.policy_kinds();
    let solution = if kinds.contains(&PolicyKind::Mfg) {
        Some(Arc::new(
            bench::solve_world(&config, &world, &grid).map_err(to_py_err)?,
        ))
    } else {
        None
    };
    let batches = world.request_batches();
    let mut out = Vec::new();
    for kind in kinds {
        let run = bench::run_policy(&config, &world, kind, solution.as_ref(), &batches, None)
            .map_err(to_py_err)?;
        let dict = PyDict::new(py);
        dict.set_item("policy", run.summary.policy)?;
        dict.set_item("requests", run.summary.requests)?;
        dict.set_item("delay_per_request_s", run.summary.delay_per_request_s)?;
        dict.set_item("load_per_fap_slot", run.summary.load_per_fap_slot)?;
        dict.set_item("cost_per_slot", run.summary.cost_per_slot)?;
        dict.set_item("served_own", run.summary.served_own)?;
        dict.set_item("served_alt", run.summary.served_alt)?;
        dict.set_item("served_retrieval", run.summary.served_retrieval)?;
        out.push(dict.unbind());
    }
    Ok(out)
}

#[pymodule]
fn mfcache_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyParams>()?;
    m.add_class::<PySolvedPolicy>()?;
    m.add_function(wrap_pyfunction!(zipf_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(cache_drift, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_control, m)?)?;
    m.add_function(wrap_pyfunction!(total_cost, m)?)?;
    m.add_function(wrap_pyfunction!(solve_policy, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
