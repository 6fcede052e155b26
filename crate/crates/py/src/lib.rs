//! Python bindings for the slicing laboratory: configuration, realization
//! sampling, the MLP policy, episode execution and violation-rate reports.
//! Intended for exploratory analysis from notebooks; the heavy lifting stays
//! in the core crate.

use std::collections::HashMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use slicelab::domain::{
    validate_config, DualMultipliers, NetworkConfig, NetworkRealization, QosSpec,
};
use slicelab::execution::{self, BaselineKind};
use slicelab::policy::{self, PolicyInput, PolicyParams, INPUT_DIM};
use slicelab::report::{self, EvaluatedRun};
use slicelab::seeds::{self, stream};
use slicelab::training::{self, TrainConfig};

fn to_py_err(error: slicelab::Error) -> PyErr {
    match &error {
        slicelab::Error::Io(_) | slicelab::Error::MissingArtifact(_) => {
            PyIOError::new_err(error.to_string())
        }
        _ => PyValueError::new_err(error.to_string()),
    }
}

/// Network configuration with the experiment defaults.
#[pyclass(name = "NetworkConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyNetworkConfig {
    inner: NetworkConfig,
}

#[pymethods]
impl PyNetworkConfig {
    #[new]
    fn new() -> Self {
        PyNetworkConfig {
            inner: NetworkConfig::default(),
        }
    }

    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        let inner: NetworkConfig =
            serde_json::from_str(json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        validate_config(&inner)
            .map_err(|errors| PyValueError::new_err(errors.join("; ")))?;
        Ok(PyNetworkConfig { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn validate(&self) -> PyResult<()> {
        validate_config(&self.inner).map_err(|errors| PyValueError::new_err(errors.join("; ")))
    }

    #[getter]
    fn num_flows(&self) -> usize {
        self.inner.num_flows
    }

    #[getter]
    fn num_windows(&self) -> usize {
        self.inner.num_windows
    }

    #[setter]
    fn set_num_windows(&mut self, value: usize) {
        self.inner.num_windows = value;
    }

    #[getter]
    fn dual_period(&self) -> usize {
        self.inner.dual_period
    }

    #[getter]
    fn r_min(&self) -> f64 {
        self.inner.qos.r_min
    }

    #[setter]
    fn set_r_min(&mut self, value: f64) {
        self.inner.qos.r_min = value;
    }

    #[getter]
    fn ell_max(&self) -> f64 {
        self.inner.qos.ell_max
    }

    #[setter]
    fn set_ell_max(&mut self, value: f64) {
        self.inner.qos.ell_max = value;
    }

    #[getter]
    fn rng_seed(&self) -> u64 {
        self.inner.rng_seed
    }

    #[setter]
    fn set_rng_seed(&mut self, value: u64) {
        self.inner.rng_seed = value;
    }

    fn __repr__(&self) -> String {
        format!(
            "NetworkConfig(num_flows={}, num_windows={}, r_min={}, ell_max={})",
            self.inner.num_flows, self.inner.num_windows, self.inner.qos.r_min,
            self.inner.qos.ell_max
        )
    }
}

/// One sampled network: flow population plus traffic/channel seeds.
#[pyclass(name = "Realization", skip_from_py_object)]
#[derive(Clone)]
struct PyRealization {
    inner: NetworkRealization,
}

#[pymethods]
impl PyRealization {
    /// Flow counts per SLA category as (high_throughput, low_latency, best_effort).
    fn slice_counts(&self) -> (usize, usize, usize) {
        let counts = self.inner.slice_counts();
        (counts[0], counts[1], counts[2])
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        let inner: NetworkRealization =
            serde_json::from_str(json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyRealization { inner })
    }

    fn __repr__(&self) -> String {
        let counts = self.inner.slice_counts();
        format!(
            "Realization(H={}, L={}, B={}, traffic_seed={}, channel_seed={})",
            counts[0], counts[1], counts[2], self.inner.traffic_seed, self.inner.channel_seed
        )
    }
}

/// The state-augmented MLP slicing policy.
#[pyclass(name = "Policy", skip_from_py_object)]
#[derive(Clone)]
struct PyPolicy {
    inner: PolicyParams,
}

#[pymethods]
impl PyPolicy {
    /// He-uniform initialization from a seed.
    #[staticmethod]
    fn initialized(seed: u64) -> Self {
        PyPolicy {
            inner: policy::init_params(&mut seeds::rng(seed, stream::INIT, 0)),
        }
    }

    /// All-zero parameters: uniform allocations for any input.
    #[staticmethod]
    fn zeros() -> Self {
        PyPolicy {
            inner: PolicyParams::zeros(),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyPolicy {
            inner: policy::load_checkpoint(path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        policy::save_checkpoint(&self.inner, path).map_err(to_py_err)
    }

    /// Slicing decision for a 9-dim network state and a multiplier pair.
    fn forward(
        &self,
        state: Vec<f64>,
        lambda_h: f64,
        lambda_l: f64,
    ) -> PyResult<(f64, f64, f64)> {
        if state.len() != INPUT_DIM - 2 {
            return Err(PyValueError::new_err(format!(
                "state must have {} entries, got {}",
                INPUT_DIM - 2,
                state.len()
            )));
        }
        let mut input = [0.0; INPUT_DIM];
        input[..9].copy_from_slice(&state);
        input[9] = lambda_h;
        input[10] = lambda_l;
        let out = policy::forward(&self.inner, &PolicyInput(input)).map_err(to_py_err)?;
        let p = out.allocation.as_array();
        Ok((p[0], p[1], p[2]))
    }

    fn parameter_count(&self) -> usize {
        self.inner.flat_len()
    }
}

/// An executed episode: the realization it ran on plus per-window records.
#[pyclass(name = "RunResult", from_py_object)]
#[derive(Clone)]
struct PyRunResult {
    inner: EvaluatedRun,
}

#[pymethods]
impl PyRunResult {
    /// Per-window records as dicts with keys t, p_h, p_l, p_b, lambda_h,
    /// lambda_l, f_h, f_l, objective.
    fn rows(&self) -> Vec<HashMap<String, f64>> {
        self.inner
            .trajectory
            .records
            .iter()
            .map(|r| {
                HashMap::from([
                    ("t".to_string(), r.t as f64),
                    ("p_h".to_string(), r.allocation.p_h),
                    ("p_l".to_string(), r.allocation.p_l),
                    ("p_b".to_string(), r.allocation.p_b),
                    ("lambda_h".to_string(), r.lambda.lambda_h),
                    ("lambda_l".to_string(), r.lambda.lambda_l),
                    ("f_h".to_string(), r.f_h),
                    ("f_l".to_string(), r.f_l),
                    ("objective".to_string(), r.objective),
                ])
            })
            .collect()
    }

    /// Dual iterates after each update block.
    fn dual_iterates(&self) -> Vec<(f64, f64)> {
        self.inner
            .trajectory
            .dual_iterates
            .iter()
            .map(|l| (l.lambda_h, l.lambda_l))
            .collect()
    }

    fn to_jsonl(&self) -> PyResult<String> {
        self.inner.trajectory.to_jsonl().map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.trajectory.records.len()
    }
}

/// Samples network realizations from the configured distribution.
#[pyfunction]
fn sample_realizations(
    config: &PyNetworkConfig,
    count: usize,
    seed: u64,
) -> PyResult<Vec<PyRealization>> {
    let mut rng = seeds::rng(seed, stream::REALIZATION, 2);
    let set =
        training::sample_realizations(count, &config.inner, &mut rng).map_err(to_py_err)?;
    Ok(set.into_iter().map(|inner| PyRealization { inner }).collect())
}

/// Executes a policy online with dual-multiplier dynamics.
#[pyfunction]
#[pyo3(signature = (policy, realization, eta_lambda = 1.0))]
fn run_online(
    policy: &PyPolicy,
    realization: &PyRealization,
    eta_lambda: f64,
) -> PyResult<PyRunResult> {
    let r = &realization.inner;
    let trajectory =
        execution::run_online(&policy.inner, r, r.config.num_windows, r.config.dual_period, eta_lambda)
            .map_err(to_py_err)?;
    Ok(PyRunResult {
        inner: EvaluatedRun {
            realization: r.clone(),
            trajectory,
        },
    })
}

/// Executes a policy with the dual input frozen for the whole episode.
#[pyfunction]
fn run_fixed_lambda(
    policy: &PyPolicy,
    realization: &PyRealization,
    lambda_h: f64,
    lambda_l: f64,
) -> PyResult<PyRunResult> {
    let lambda = DualMultipliers::new(lambda_h, lambda_l).map_err(to_py_err)?;
    let trajectory = execution::run_fixed_lambda(&policy.inner, &realization.inner, lambda)
        .map_err(to_py_err)?;
    Ok(PyRunResult {
        inner: EvaluatedRun {
            realization: realization.inner.clone(),
            trajectory,
        },
    })
}

/// Executes a classical baseline: "uniform", "proportional" or "tw".
#[pyfunction]
fn run_baseline(kind: &str, realization: &PyRealization) -> PyResult<PyRunResult> {
    let kind = match kind {
        "uniform" => BaselineKind::Uniform,
        "proportional" => BaselineKind::Proportional,
        "tw" | "traffic_weighted" => BaselineKind::TrafficWeighted,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown baseline `{other}` (expected uniform, proportional or tw)"
            )))
        }
    };
    let trajectory = execution::run_baseline(kind, &realization.inner).map_err(to_py_err)?;
    Ok(PyRunResult {
        inner: EvaluatedRun {
            realization: realization.inner.clone(),
            trajectory,
        },
    })
}

/// Instantaneous and ergodic QoS violation percentages pooled over runs.
#[pyfunction]
fn violation_rates(
    runs: Vec<PyRunResult>,
    r_min: f64,
    ell_max: f64,
) -> PyResult<HashMap<String, f64>> {
    let evaluated: Vec<EvaluatedRun> = runs.into_iter().map(|r| r.inner).collect();
    let rates = report::violation_rates(&evaluated, &QosSpec::new(r_min, ell_max))
        .map_err(to_py_err)?;
    Ok(HashMap::from([
        ("h_inst".to_string(), rates.h_inst),
        ("h_erg".to_string(), rates.h_erg),
        ("l_inst".to_string(), rates.l_inst),
        ("l_erg".to_string(), rates.l_erg),
    ]))
}

/// Shannon spectral efficiency log2(1 + h / sigma2) in bps/Hz.
#[pyfunction]
fn shannon_rate(h: f64, sigma2: f64) -> f64 {
    slicelab::channel::shannon_rate(h, sigma2, slicelab::domain::LogBase::Two)
}

/// Offline state-augmented primal-dual training at the configured scale.
#[pyfunction]
#[pyo3(signature = (config, num_train, num_val, epochs, batch_size = 4, seed = 0))]
fn train_state_augmented(
    config: &PyNetworkConfig,
    num_train: usize,
    num_val: usize,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> PyResult<PyPolicy> {
    let mut train_rng = seeds::rng(seed, stream::REALIZATION, 0);
    let mut val_rng = seeds::rng(seed, stream::REALIZATION, 1);
    let train = training::sample_realizations(num_train, &config.inner, &mut train_rng)
        .map_err(to_py_err)?;
    let val = training::sample_realizations(num_val, &config.inner, &mut val_rng)
        .map_err(to_py_err)?;
    let train_config = TrainConfig {
        num_epochs: epochs,
        batch_size,
        seed,
        ..TrainConfig::default()
    };
    let outcome =
        training::train_state_augmented(&train, &val, &train_config).map_err(to_py_err)?;
    Ok(PyPolicy {
        inner: outcome.params,
    })
}

#[pymodule]
fn slicelab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetworkConfig>()?;
    m.add_class::<PyRealization>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(sample_realizations, m)?)?;
    m.add_function(wrap_pyfunction!(run_online, m)?)?;
    m.add_function(wrap_pyfunction!(run_fixed_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(run_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(violation_rates, m)?)?;
    m.add_function(wrap_pyfunction!(shannon_rate, m)?)?;
    m.add_function(wrap_pyfunction!(train_state_augmented, m)?)?;
    Ok(())
}
