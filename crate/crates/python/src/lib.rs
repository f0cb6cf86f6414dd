use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ladr::denoiser::gibbs_sample_potts as core_gibbs;
use ladr::harness::{run_single, ExperimentConfig};
use ladr::selection;
use ladr::verify::{mi_locality_check as core_mi, MiParams};
use ladr::{Kernel, LadrError, MaskFraction, MaskGrid, Phase, ScheduleKind, Strategy, Timestep};

fn to_py(e: LadrError) -> PyErr {
    match e {
        LadrError::Io { .. } => PyOSError::new_err(e.to_string()),
        LadrError::Resource(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Mask schedule `gamma(t)` with its inverse and the per-step timestep rule.
#[pyclass(frozen, module = "ladr_py")]
struct Schedule {
    inner: ladr::Schedule,
}

#[pymethods]
impl Schedule {
    #[new]
    #[pyo3(signature = (kind = "cosine", steps = 64))]
    fn new(kind: &str, steps: u32) -> PyResult<Self> {
        let kind: ScheduleKind = kind.parse().map_err(to_py)?;
        let inner = ladr::Schedule::new(kind, steps).map_err(to_py)?;
        Ok(Schedule { inner })
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    #[getter]
    fn steps(&self) -> u32 {
        self.inner.steps
    }

    fn gamma(&self, t: f64) -> f64 {
        self.inner.gamma(Timestep::new(t)).get()
    }

    fn gamma_inv(&self, rho: f64) -> f64 {
        self.inner.gamma_inv(MaskFraction::new(rho)).get()
    }

    fn next_timestep(&self, t_eff: f64) -> f64 {
        self.inner.next_timestep(Timestep::new(t_eff)).get()
    }

    fn target_mask_count(&self, n: usize, t: f64) -> usize {
        self.inner.target_mask_count(n, Timestep::new(t))
    }

    fn __repr__(&self) -> String {
        format!("Schedule(kind='{}', steps={})", self.inner.kind, self.inner.steps)
    }
}

/// Piecewise `(alpha, tau)` rescue policy over `t_eff`.
#[pyclass(frozen, module = "ladr_py")]
struct PhasePolicy {
    inner: ladr::PhasePolicy,
}

#[pymethods]
impl PhasePolicy {
    /// `phases` is a list of `(t_lo, t_hi, alpha, tau_or_None)`; omitted means
    /// the default three-phase policy.
    #[new]
    #[pyo3(signature = (phases = None))]
    fn new(phases: Option<Vec<PhaseTuple>>) -> PyResult<Self> {
        let inner = match phases {
            None => ladr::PhasePolicy::default(),
            Some(list) => ladr::PhasePolicy::new(
                list.into_iter()
                    .map(|(t_lo, t_hi, alpha, tau)| Phase { t_lo, t_hi, alpha, tau })
                    .collect(),
            )
            .map_err(to_py)?,
        };
        Ok(PhasePolicy { inner })
    }

    #[getter]
    fn phases(&self) -> Vec<PhaseTuple> {
        self.inner
            .phases()
            .iter()
            .map(|p| (p.t_lo, p.t_hi, p.alpha, p.tau))
            .collect()
    }

    fn policy_at(&self, t_eff: f64) -> (f64, Option<f64>) {
        self.inner.policy_at(Timestep::new(t_eff))
    }
}

/// `(t_lo, t_hi, alpha, tau)`.
type PhaseTuple = (f64, f64, f64, Option<f64>);

fn grid(mask: Vec<bool>, height: usize, width: usize) -> PyResult<MaskGrid> {
    MaskGrid::from_flat(mask, height, width).map_err(to_py)
}

/// Masked positions with an observed cell in their `kernel` window, ascending.
#[pyfunction]
#[pyo3(signature = (mask, height, width, kernel = 3))]
fn frontier(mask: Vec<bool>, height: usize, width: usize, kernel: usize) -> PyResult<Vec<usize>> {
    let k = Kernel::new(kernel).map_err(to_py)?;
    Ok(grid(mask, height, width)?.frontier(k))
}

/// Cells with an observed cell in their `kernel` window (zero padding).
#[pyfunction]
#[pyo3(signature = (mask, height, width, kernel = 3))]
fn dilate_observed(mask: Vec<bool>, height: usize, width: usize, kernel: usize) -> PyResult<Vec<bool>> {
    let k = Kernel::new(kernel).map_err(to_py)?;
    Ok(grid(mask, height, width)?.dilate_observed(k).into_flat())
}

#[pyfunction]
fn confidence_margin(probs: Vec<f64>) -> PyResult<f64> {
    selection::confidence_margin(&probs).map_err(to_py)
}

#[pyfunction]
fn margin_error_bound(tau: f64) -> f64 {
    selection::margin_error_bound(tau)
}

#[pyfunction]
fn margin_error_bound_k(k: usize, tau: f64) -> f64 {
    selection::margin_error_bound_k(k, tau)
}

/// Worst-case error over all distributions on a `grid_step` lattice with
/// margin at least `tau`.
#[pyfunction]
#[pyo3(signature = (k, tau, grid_step = 0.01))]
fn margin_bound_bruteforce(py: Python<'_>, k: usize, tau: f64, grid_step: f64) -> PyResult<f64> {
    py.detach(|| selection::margin_bound_bruteforce(k, tau, grid_step))
        .map_err(to_py)
}

/// Keep the `n_mask` least confident masked positions masked.
#[pyfunction]
fn standard_select(top1: Vec<f64>, mask: Vec<bool>, n_mask: usize) -> PyResult<Vec<bool>> {
    selection::standard_select(&top1, &mask, n_mask).map_err(to_py)
}

/// Frontier positions to unmask early; `margins` is indexed by flat position.
#[pyfunction]
#[pyo3(signature = (margins, candidates, alpha, tau = None))]
fn rescue_select(margins: Vec<f64>, candidates: Vec<usize>, alpha: f64, tau: Option<f64>) -> PyResult<Vec<usize>> {
    if let Some(&bad) = candidates.iter().find(|&&i| i >= margins.len()) {
        return Err(PyValueError::new_err(format!(
            "candidate {bad} out of range for {} margins",
            margins.len()
        )));
    }
    Ok(selection::rescue_select(&margins, &candidates, alpha, tau))
}

/// Decode one strategy/seed of a JSON experiment config (`None` is the demo).
/// Returns a dict with `tokens`, `nfe`, `rescued_total`, `token_accuracy`
/// and `trace` (one dict per step).
#[pyfunction]
#[pyo3(signature = (config_json = None, strategy = None, seed = None))]
fn decode<'py>(
    py: Python<'py>,
    config_json: Option<&str>,
    strategy: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = match config_json {
        Some(text) => ExperimentConfig::from_json(text).map_err(to_py)?,
        None => ExperimentConfig::demo(),
    };
    let strategy: Strategy = match strategy {
        Some(s) => s.parse().map_err(to_py)?,
        None => cfg.strategies[0],
    };
    let seed = seed.unwrap_or(cfg.seed);
    let (_, result, row) = py
        .detach(|| run_single(&cfg, strategy, seed))
        .map_err(to_py)?;

    let trace = result
        .trace
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("step", r.step)?;
            d.set_item("rho_before", r.rho_before)?;
            d.set_item("t_eff", r.t_eff)?;
            d.set_item("t_next", r.t_next)?;
            d.set_item("n_mask_target", r.n_mask_target)?;
            d.set_item("standard_unmasked", r.standard_unmasked)?;
            d.set_item("frontier_size", r.frontier_size)?;
            d.set_item("rescued", r.rescued)?;
            d.set_item("rho_after", r.rho_after)?;
            d.set_item("forward_passes_so_far", r.forward_passes_so_far)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = PyDict::new(py);
    out.set_item("tokens", result.tokens.tokens().to_vec())?;
    out.set_item("height", cfg.height)?;
    out.set_item("width", cfg.width)?;
    out.set_item("nfe", result.nfe)?;
    out.set_item("rescued_total", row.rescued_total)?;
    out.set_item("token_accuracy", row.token_accuracy)?;
    out.set_item("trace", trace)?;
    Ok(out)
}

/// One Potts lattice sample, row-major.
#[pyfunction]
#[pyo3(signature = (height, width, k, beta, sweeps = 32, seed = 0))]
fn gibbs_sample_potts(
    py: Python<'_>,
    height: usize,
    width: usize,
    k: usize,
    beta: f64,
    sweeps: usize,
    seed: u64,
) -> PyResult<Vec<u32>> {
    let grid = py
        .detach(|| core_gibbs(height, width, k, beta, sweeps, seed))
        .map_err(to_py)?;
    Ok(grid.tokens().to_vec())
}

/// Near vs far information (bits) around the centre of Potts samples.
#[pyfunction]
#[pyo3(signature = (k = 3, beta = 1.2, size = 16, samples = 50_000, d_far = 6, sweeps = 32, bootstrap = 200, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn mi_locality_check<'py>(
    py: Python<'py>,
    k: usize,
    beta: f64,
    size: usize,
    samples: usize,
    d_far: usize,
    sweeps: usize,
    bootstrap: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = MiParams {
        vocab_size: k,
        beta,
        height: size,
        width: size,
        samples,
        d_far,
        sweeps,
        bootstrap,
        seed,
    };
    let r = py.detach(|| core_mi(&params)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("i_near", r.i_near)?;
    out.set_item("i_far", r.i_far)?;
    out.set_item("bootstrap_std", r.bootstrap_std)?;
    out.set_item("samples", r.samples)?;
    out.set_item("sparse_support", r.sparse_support)?;
    out.set_item("near_dominates", r.near_dominates())?;
    out.set_item("both_negligible", r.both_negligible())?;
    Ok(out)
}

#[pymodule]
fn ladr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Schedule>()?;
    m.add_class::<PhasePolicy>()?;
    m.add_function(wrap_pyfunction!(frontier, m)?)?;
    m.add_function(wrap_pyfunction!(dilate_observed, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_margin, m)?)?;
    m.add_function(wrap_pyfunction!(margin_error_bound, m)?)?;
    m.add_function(wrap_pyfunction!(margin_error_bound_k, m)?)?;
    m.add_function(wrap_pyfunction!(margin_bound_bruteforce, m)?)?;
    m.add_function(wrap_pyfunction!(standard_select, m)?)?;
    m.add_function(wrap_pyfunction!(rescue_select, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs_sample_potts, m)?)?;
    m.add_function(wrap_pyfunction!(mi_locality_check, m)?)?;
    Ok(())
}
