use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::{ExperimentConfig, Method};
use super::pipeline::{encode_series, evaluate_segment, load_series, prepare_series, PreparedSeries};

/// Candidate values per hyperparameter. Empty lists keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamGrid {
    pub spectral_radius: Vec<f64>,
    pub leak_rate: Vec<f64>,
    pub input_scaling: Vec<f64>,
    pub temperature: Vec<f64>,
    /// `None` entries mean an unbounded window.
    pub window: Vec<Option<usize>>,
    pub nexcp_rho: Vec<f64>,
}

impl ParamGrid {
    /// The search space used when none is given, per method.
    pub fn default_for(method: Method) -> Self {
        match method {
            Method::Rescp | Method::Rescqr => Self {
                spectral_radius: vec![0.5, 0.9, 1.2, 1.5],
                leak_rate: vec![0.5, 1.0],
                input_scaling: vec![0.1, 1.0, 3.0],
                temperature: if method == Method::Rescp {
                    vec![0.01, 0.05, 0.1, 0.5, 2.0]
                } else {
                    Vec::new()
                },
                window: Vec::new(),
                nexcp_rho: Vec::new(),
            },
            Method::Nexcp => Self {
                nexcp_rho: crate::baselines::NexcpConfig::SEARCH_GRID.to_vec(),
                ..Self::default()
            },
            Method::Scp => Self::default(),
        }
    }

    /// Cartesian product applied on top of `base`, in a fixed order.
    pub fn expand(&self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        fn axis<T: Clone>(values: &[T], current: T) -> Vec<T> {
            if values.is_empty() {
                vec![current]
            } else {
                values.to_vec()
            }
        }
        let mut out = Vec::new();
        for &sr in &axis(&self.spectral_radius, base.reservoir.spectral_radius) {
            for &lr in &axis(&self.leak_rate, base.reservoir.leak_rate) {
                for &is in &axis(&self.input_scaling, base.reservoir.input_scaling) {
                    for &tau in &axis(&self.temperature, base.temperature) {
                        for &w in &axis(&self.window, base.window) {
                            for &rho in &axis(&self.nexcp_rho, base.nexcp.rho) {
                                let mut c = base.clone();
                                c.reservoir.spectral_radius = sr;
                                c.reservoir.leak_rate = lr;
                                c.reservoir.input_scaling = is;
                                c.temperature = tau;
                                c.window = w;
                                c.nexcp.rho = rho;
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub spectral_radius: f64,
    pub leak_rate: f64,
    pub input_scaling: f64,
    pub temperature: f64,
    pub window: Option<usize>,
    pub nexcp_rho: f64,
    /// Mean Winkler score on the validation segment; `None` when it failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: ExperimentConfig,
    pub best_score: f64,
    pub points: Vec<GridPoint>,
}

fn score_point(config: &ExperimentConfig, prepared: &[(u64, PreparedSeries)], validation_fraction: f64) -> Result<f64> {
    config.validate()?;
    let mut total = 0.0;
    for (seed, prep) in prepared {
        let cal = prep.splits.calibration.clone();
        let n_val = ((cal.len() as f64 * validation_fraction).floor() as usize).max(1);
        if n_val >= cal.len() {
            return Err(Error::EmptySplit("grid-search calibration"));
        }
        let val_start = cal.end - n_val;
        let states = match config.method {
            Method::Rescp | Method::Rescqr => {
                let rc = crate::reservoir::ReservoirConfig {
                    seed: *seed,
                    ..config.reservoir.clone()
                };
                let exo = config.method == Method::Rescqr && config.use_exogenous;
                Some(encode_series(prep, &rc, exo)?)
            }
            _ => None,
        };
        let out = evaluate_segment(
            config,
            prep,
            states.as_ref(),
            cal.start..val_start,
            val_start..cal.end,
            *seed,
        )?;
        total += out.report.mean_winkler;
    }
    Ok(total / prepared.len() as f64)
}

/// Selects hyperparameters by mean Winkler score on the last
/// `validation_fraction` of the calibration split. The test split is never
/// touched. Ties go to the earliest grid point.
pub fn grid_search(base: &ExperimentConfig, grid: &ParamGrid, validation_fraction: f64) -> Result<GridResult> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::Config(format!(
            "validation fraction must lie in (0, 1), got {validation_fraction}"
        )));
    }
    let candidates = grid.expand(base);
    let prepared = base
        .seeds
        .iter()
        .map(|&seed| {
            let (bundle, preds) = load_series(base, seed).map_err(Error::at("load"))?;
            Ok((seed, prepare_series(base, bundle, preds)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let scores: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|c| score_point(c, &prepared, validation_fraction))
        .collect();

    let mut best: Option<(usize, f64)> = None;
    let mut points = Vec::with_capacity(candidates.len());
    let mut failures = Vec::new();
    for (i, (c, s)) in candidates.iter().zip(scores).enumerate() {
        let (score, error) = match s {
            Ok(v) if v.is_finite() => (Some(v), None),
            Ok(v) => (None, Some(format!("non-finite score {v}"))),
            Err(e) => (None, Some(e.to_string())),
        };
        if let Some(v) = score {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
        if let Some(e) = &error {
            failures.push(format!("point {i}: {e}"));
        }
        points.push(GridPoint {
            spectral_radius: c.reservoir.spectral_radius,
            leak_rate: c.reservoir.leak_rate,
            input_scaling: c.reservoir.input_scaling,
            temperature: c.temperature,
            window: c.window,
            nexcp_rho: c.nexcp.rho,
            score,
            error,
        });
    }
    let (i, best_score) = best.ok_or(Error::GridFailed(failures))?;
    Ok(GridResult {
        best: candidates[i].clone(),
        best_score,
        points,
    })
}
