//! Python bindings: reservoir encoding, similarity weights, weighted
//! quantiles, calibration stores, interval builders, metrics and full
//! experiment runs.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyAny;

use rescp::baselines::{self, NexcpConfig};
use rescp::conformal::{self, PredictionInterval, QuantileMode, RescpParams};
use rescp::data::SyntheticKind;
use rescp::evaluation;
use rescp::experiment::{self, ExperimentConfig};
use rescp::rescqr::{self, LinearQuantileModel, TrainConfig};
use rescp::reservoir::{self, ReservoirConfig};
use rescp::weighting::{self, DecaySchedule, Similarity, WeightVector};

create_exception!(rescp, RescpError, PyException);

fn py_err(e: rescp::Error) -> PyErr {
    RescpError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = rescp::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

fn weight_vector(weights: Vec<f64>) -> PyResult<WeightVector> {
    WeightVector::from_unnormalized(weights).map_err(py_err)
}

fn to_python<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

/// A prediction interval around a point forecast.
#[pyclass(name = "Interval", frozen, from_py_object)]
#[derive(Clone)]
struct PyInterval(PredictionInterval);

#[pymethods]
impl PyInterval {
    #[new]
    #[pyo3(signature = (lower, upper, alpha, center=None))]
    fn new(lower: f64, upper: f64, alpha: f64, center: Option<f64>) -> Self {
        Self(PredictionInterval {
            lower,
            upper,
            alpha,
            beta_star: alpha / 2.0,
            ess: f64::NAN,
            center: center.unwrap_or((lower + upper) / 2.0),
        })
    }

    #[getter]
    fn lower(&self) -> f64 {
        self.0.lower
    }

    #[getter]
    fn upper(&self) -> f64 {
        self.0.upper
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn beta_star(&self) -> f64 {
        self.0.beta_star
    }

    #[getter]
    fn ess(&self) -> f64 {
        self.0.ess
    }

    #[getter]
    fn center(&self) -> f64 {
        self.0.center
    }

    fn width(&self) -> f64 {
        self.0.width()
    }

    fn contains(&self, y: f64) -> bool {
        self.0.contains(y)
    }

    fn __repr__(&self) -> String {
        format!(
            "Interval(lower={}, upper={}, alpha={}, beta_star={}, ess={})",
            self.0.lower, self.0.upper, self.0.alpha, self.0.beta_star, self.0.ess
        )
    }
}

/// Fixed random echo state network.
#[pyclass(name = "Reservoir", frozen)]
struct PyReservoir(reservoir::Reservoir);

#[pymethods]
impl PyReservoir {
    #[new]
    #[pyo3(signature = (
        input_dim,
        size=512,
        spectral_radius=0.9,
        leak_rate=1.0,
        input_scaling=1.0,
        connectivity=0.2,
        seed=0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        input_dim: usize,
        size: usize,
        spectral_radius: f64,
        leak_rate: f64,
        input_scaling: f64,
        connectivity: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let config = ReservoirConfig {
            size,
            spectral_radius,
            leak_rate,
            input_scaling,
            connectivity,
            seed,
            ..Default::default()
        };
        reservoir::build_reservoir(&config, input_dim).map(Self).map_err(py_err)
    }

    #[getter]
    fn size(&self) -> usize {
        self.0.size()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    /// Largest eigenvalue modulus of the recurrent matrix.
    fn spectral_radius(&self) -> f64 {
        reservoir::estimate_spectral_radius(self.0.recurrent())
    }

    /// States for each input row, starting from `h0` (zeros by default).
    #[pyo3(signature = (inputs, h0=None))]
    fn encode(&self, py: Python<'_>, inputs: Vec<Vec<f64>>, h0: Option<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let h0 = h0.unwrap_or_else(|| vec![0.0; self.0.size()]);
        let traj = py.detach(|| reservoir::encode(&self.0, &inputs, &h0)).map_err(py_err)?;
        Ok(traj.iter().map(<[f64]>::to_vec).collect())
    }
}

/// Calibration set of `(time, state, residual)` entries, oldest first.
#[pyclass(name = "CalibrationStore")]
struct PyCalibrationStore(conformal::CalibrationStore);

#[pymethods]
impl PyCalibrationStore {
    #[new]
    #[pyo3(signature = (horizon=1, capacity=None))]
    fn new(horizon: usize, capacity: Option<usize>) -> PyResult<Self> {
        conformal::CalibrationStore::new(horizon, capacity)
            .map(Self)
            .map_err(py_err)
    }

    /// Appends an entry; the oldest is evicted once the capacity is reached.
    fn push(&mut self, time: i64, state: Vec<f64>, residual: f64) -> PyResult<()> {
        self.0.push(time, state, residual).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn times(&self) -> Vec<i64> {
        self.0.times()
    }

    fn residuals(&self) -> Vec<f64> {
        self.0.residuals()
    }
}

/// Linear multi-quantile readout on reservoir states.
#[pyclass(name = "QuantileReadout", frozen)]
struct PyQuantileReadout(LinearQuantileModel);

#[pymethods]
impl PyQuantileReadout {
    /// Fits quantiles at the levels needed for miscoverage `alpha`.
    #[staticmethod]
    #[pyo3(signature = (states, residuals, alpha=0.1, epochs=200, learning_rate=0.003, seed=0))]
    fn fit(
        py: Python<'_>,
        states: Vec<Vec<f64>>,
        residuals: Vec<f64>,
        alpha: f64,
        epochs: usize,
        learning_rate: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = TrainConfig {
            epochs,
            learning_rate,
            seed,
            ..Default::default()
        };
        let levels = rescqr::rescqr_levels(alpha);
        py.detach(|| {
            let refs: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
            rescqr::fit_readout(&refs, &residuals, &levels, &cfg)
        })
        .map(Self)
        .map_err(py_err)
    }

    #[getter]
    fn levels(&self) -> Vec<f64> {
        self.0.levels.clone()
    }

    /// Non-crossing quantile predictions, one per level.
    fn predict(&self, state: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.predict(&state).map_err(py_err)
    }

    #[pyo3(signature = (state, center, alpha=0.1, beta_search=false))]
    fn interval(&self, state: Vec<f64>, center: f64, alpha: f64, beta_search: bool) -> PyResult<PyInterval> {
        rescqr::rescqr_interval(&self.0, &state, center, alpha, beta_search)
            .map(PyInterval)
            .map_err(py_err)
    }
}

/// Similarity of `query` to each calibration state.
#[pyfunction]
#[pyo3(signature = (query, states, similarity="cosine"))]
fn similarity_scores(query: Vec<f64>, states: Vec<Vec<f64>>, similarity: &str) -> PyResult<Vec<f64>> {
    let kind = parse::<Similarity>(similarity)?;
    weighting::similarity_scores(&query, states.iter().map(Vec::as_slice), kind).map_err(py_err)
}

/// Softmax of `scores / temperature`; returns `(weights, ess)`.
#[pyfunction]
fn softmax_weights(scores: Vec<f64>, temperature: f64) -> PyResult<(Vec<f64>, f64)> {
    let w = weighting::softmax_weights(&scores, temperature).map_err(py_err)?;
    Ok((w.weights, w.ess))
}

/// Age discount (`none`, `linear` or `exp:<rho>`) applied to `weights`;
/// returns `(weights, ess)`.
#[pyfunction]
fn apply_temporal_decay(
    weights: Vec<f64>,
    calib_times: Vec<i64>,
    query_time: i64,
    decay: &str,
) -> PyResult<(Vec<f64>, f64)> {
    let schedule = parse::<DecaySchedule>(decay)?;
    let w = weighting::apply_temporal_decay(&weight_vector(weights)?, &calib_times, query_time, schedule)
        .map_err(py_err)?;
    Ok((w.weights, w.ess))
}

#[pyfunction]
fn effective_sample_size(weights: Vec<f64>) -> PyResult<f64> {
    weighting::effective_sample_size(&weights).map_err(py_err)
}

/// Smallest residual whose cumulative weight reaches `beta`. Weights are
/// normalized first.
#[pyfunction]
fn weighted_quantile(residuals: Vec<f64>, weights: Vec<f64>, beta: f64) -> PyResult<f64> {
    conformal::weighted_quantile(&residuals, &weight_vector(weights)?, beta).map_err(py_err)
}

/// Quantile of `n_samples` residuals resampled by weight.
#[pyfunction]
#[pyo3(signature = (residuals, weights, beta, n_samples=10_000, seed=0))]
fn mc_quantile(residuals: Vec<f64>, weights: Vec<f64>, beta: f64, n_samples: usize, seed: u64) -> PyResult<f64> {
    conformal::mc_quantile(&residuals, &weight_vector(weights)?, beta, n_samples, seed).map_err(py_err)
}

/// Level pair minimizing the interval width; returns `(beta, lower, upper)`.
#[pyfunction]
#[pyo3(signature = (residuals, weights, alpha, grid_step=None))]
fn beta_star(residuals: Vec<f64>, weights: Vec<f64>, alpha: f64, grid_step: Option<f64>) -> PyResult<(f64, f64, f64)> {
    conformal::beta_star(
        &residuals,
        &weight_vector(weights)?,
        alpha,
        grid_step.unwrap_or(alpha / 20.0),
    )
    .map_err(py_err)
}

/// Similarity-weighted interval for the forecast `center` issued at `time`.
#[pyfunction]
#[pyo3(signature = (
    state,
    time,
    center,
    store,
    alpha=0.1,
    temperature=0.1,
    similarity="cosine",
    decay="none",
    beta_search=false,
    grid_step=None,
    mc_samples=None,
    mc_seed=0,
))]
#[allow(clippy::too_many_arguments)]
fn rescp_interval(
    state: Vec<f64>,
    time: i64,
    center: f64,
    store: PyRef<'_, PyCalibrationStore>,
    alpha: f64,
    temperature: f64,
    similarity: &str,
    decay: &str,
    beta_search: bool,
    grid_step: Option<f64>,
    mc_samples: Option<usize>,
    mc_seed: u64,
) -> PyResult<PyInterval> {
    let params = RescpParams {
        alpha,
        temperature,
        similarity: parse(similarity)?,
        decay: parse(decay)?,
        beta_search,
        grid_step,
        quantile_mode: match mc_samples {
            Some(n_samples) => QuantileMode::MonteCarlo {
                n_samples,
                seed: mc_seed,
            },
            None => QuantileMode::Exact,
        },
    };
    conformal::rescp_interval(&state, time, center, &store.0, &params)
        .map(PyInterval)
        .map_err(py_err)
}

/// Split conformal interval from unweighted residual ranks.
#[pyfunction]
#[pyo3(signature = (residuals, center, alpha=0.1))]
fn scp_interval(residuals: Vec<f64>, center: f64, alpha: f64) -> PyResult<PyInterval> {
    baselines::scp_interval(&residuals, center, alpha)
        .map(PyInterval)
        .map_err(py_err)
}

/// Interval with weights `rho^age` over the calibration residuals.
#[pyfunction]
#[pyo3(signature = (residuals, calib_times, query_time, center, alpha=0.1, rho=0.99))]
fn nexcp_interval(
    residuals: Vec<f64>,
    calib_times: Vec<i64>,
    query_time: i64,
    center: f64,
    alpha: f64,
    rho: f64,
) -> PyResult<PyInterval> {
    baselines::nexcp_interval(
        &residuals,
        &calib_times,
        query_time,
        center,
        alpha,
        &NexcpConfig { rho },
    )
    .map(PyInterval)
    .map_err(py_err)
}

#[pyfunction]
fn pinball_loss(q_pred: f64, r: f64, beta: f64) -> f64 {
    rescqr::pinball_loss(q_pred, r, beta)
}

#[pyfunction]
fn winkler_score(interval: PyInterval, y: f64) -> f64 {
    evaluation::winkler_score(&interval.0, y)
}

/// Empirical coverage minus `1 - alpha`.
#[pyfunction]
fn coverage_gap(covered: Vec<bool>, alpha: f64) -> PyResult<f64> {
    evaluation::coverage_gap(&covered, alpha).map_err(py_err)
}

/// Synthetic series (`ar1` or `regime_switch`) as a dict with `time`, `y`
/// and, for regime switching, `regime`.
#[pyfunction]
#[pyo3(signature = (kind="regime_switch", length=10_000, seed=0))]
fn generate<'py>(py: Python<'py>, kind: &str, length: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let kind = match kind {
        "ar1" => SyntheticKind::ar1(),
        "regime_switch" => SyntheticKind::regime_switch(),
        other => {
            return Err(RescpError::new_err(format!(
                "unknown synthetic series '{other}' (expected ar1 or regime_switch)"
            )))
        }
    };
    let bundle = rescp::data::gen_synthetic(kind, length, seed).map_err(py_err)?;
    let mut out = serde_json::json!({ "time": bundle.times, "y": bundle.target });
    if let Some(exo) = &bundle.exogenous {
        for (j, name) in bundle.feature_names.iter().enumerate() {
            out[name] = exo.iter().map(|row| row[j]).collect();
        }
    }
    to_python(py, &out)
}

/// Runs an experiment described by a TOML document and returns the
/// aggregate metrics, per-seed reports and, optionally, per-step rows.
#[pyfunction]
#[pyo3(signature = (config_toml, include_steps=false))]
fn run_experiment<'py>(py: Python<'py>, config_toml: &str, include_steps: bool) -> PyResult<Bound<'py, PyAny>> {
    let config: ExperimentConfig = toml::from_str(config_toml).map_err(|e| RescpError::new_err(e.to_string()))?;
    let out = py.detach(|| experiment::run_experiment(&config)).map_err(py_err)?;
    let runs: Vec<serde_json::Value> = out
        .runs
        .iter()
        .map(|run| {
            let mut report = run.report.clone();
            report.per_step = None;
            let mut value = serde_json::json!({ "seed": run.seed, "report": report });
            if include_steps {
                value["steps"] = run
                    .steps
                    .iter()
                    .map(|s| {
                        serde_json::json!({
                            "time": s.time,
                            "center": s.center,
                            "lower": s.lower,
                            "upper": s.upper,
                            "y": s.y,
                            "covered": s.covered,
                            "winkler": s.winkler,
                            "ess": s.ess,
                        })
                    })
                    .collect();
            }
            value
        })
        .collect();
    let value = serde_json::json!({
        "config": config,
        "aggregate": out.aggregate,
        "runs": runs,
    });
    to_python(py, &value)
}

#[pymodule]
#[pyo3(name = "rescp")]
fn rescp_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RescpError", m.py().get_type::<RescpError>())?;
    m.add_class::<PyInterval>()?;
    m.add_class::<PyReservoir>()?;
    m.add_class::<PyCalibrationStore>()?;
    m.add_class::<PyQuantileReadout>()?;
    m.add_function(wrap_pyfunction!(similarity_scores, m)?)?;
    m.add_function(wrap_pyfunction!(softmax_weights, m)?)?;
    m.add_function(wrap_pyfunction!(apply_temporal_decay, m)?)?;
    m.add_function(wrap_pyfunction!(effective_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(mc_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(beta_star, m)?)?;
    m.add_function(wrap_pyfunction!(rescp_interval, m)?)?;
    m.add_function(wrap_pyfunction!(scp_interval, m)?)?;
    m.add_function(wrap_pyfunction!(nexcp_interval, m)?)?;
    m.add_function(wrap_pyfunction!(pinball_loss, m)?)?;
    m.add_function(wrap_pyfunction!(winkler_score, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_gap, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
