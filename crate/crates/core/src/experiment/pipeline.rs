use std::ops::Range;

use crate::baselines::{nexcp_interval, scp_interval};
use crate::conformal::{rescp_interval, CalibrationStore, PredictionInterval, QuantileMode};
use crate::data::{gen_synthetic, load_csv, split_series, SeriesBundle, Splits};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_run, winkler_score, EvalReport};
use crate::forecasting::{fit_ar_forecaster, predict_and_residuals};
use crate::rescqr::{fit_readout, rescqr_interval, rescqr_levels, LinearQuantileModel};
use crate::reservoir::{build_reservoir, encode_from, ReservoirConfig, StateTrajectory};

use super::config::{DataSource, ExperimentConfig, Method};

/// One row of the per-step output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    /// Series time of the forecast target.
    pub time: i64,
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    pub y: f64,
    pub covered: bool,
    pub winkler: f64,
    pub ess: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub report: EvalReport,
    pub steps: Vec<StepOutput>,
    pub intervals: Vec<PredictionInterval>,
}

/// Series with point forecasts and residuals, ready for any method.
#[derive(Debug, Clone)]
pub struct PreparedSeries {
    pub bundle: SeriesBundle,
    pub splits: Splits,
    /// `ŷ_t`, defined from `first_residual` on.
    pub y_hat: Vec<f64>,
    /// `r_t = y_t - ŷ_t`, defined from `first_residual` on.
    pub residuals: Vec<f64>,
    pub first_residual: usize,
    pub horizon: usize,
}

impl PreparedSeries {
    pub fn len(&self) -> usize {
        self.bundle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundle.is_empty()
    }
}

pub fn load_series(config: &ExperimentConfig, seed: u64) -> Result<(SeriesBundle, Option<Vec<f64>>)> {
    match &config.data {
        DataSource::Csv { path, spec } => {
            let (bundle, forecasts) = load_csv(path, spec)?;
            Ok((bundle, forecasts.map(|f| f.y_hat)))
        }
        DataSource::Synthetic { kind, length, seed: s } => {
            Ok((gen_synthetic(*kind, *length, s.unwrap_or(seed))?, None))
        }
    }
}

/// Splits the series and produces forecasts: the AR forecaster is fitted on
/// the training range unless external predictions are supplied.
pub fn prepare_series(
    config: &ExperimentConfig,
    bundle: SeriesBundle,
    external_predictions: Option<Vec<f64>>,
) -> Result<PreparedSeries> {
    let splits = split_series(bundle.len(), &config.split).map_err(Error::at("split"))?;
    let h = config.horizon;
    let (y_hat, first) = match external_predictions {
        Some(p) => (p, 0),
        None => {
            let train = &bundle.target[splits.train.clone()];
            let model = fit_ar_forecaster(train, config.forecaster.window, h, config.forecaster.ridge)
                .map_err(Error::at("forecaster fit"))?;
            let first = model.first_target();
            let fs =
                predict_and_residuals(&model, &bundle.target, first..bundle.len()).map_err(Error::at("forecast"))?;
            let mut y_hat = vec![f64::NAN; first];
            y_hat.extend(fs.y_hat);
            (y_hat, first)
        }
    };
    if first + h > splits.calibration.start {
        return Err(Error::Stage {
            stage: "forecast",
            source: Box::new(Error::InsufficientContext {
                index: splits.calibration.start,
                required: first + h,
            }),
        });
    }
    let residuals = bundle.target.iter().zip(&y_hat).map(|(y, p)| y - p).collect();
    Ok(PreparedSeries {
        bundle,
        splits,
        y_hat,
        residuals,
        first_residual: first,
        horizon: h,
    })
}

fn standardize_column(values: &mut [f64], train: &[f64]) {
    let n = train.len().max(1) as f64;
    let mean = train.iter().sum::<f64>() / n;
    let var = train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
}

/// Reservoir inputs from `first_residual` on: the residual stream, plus the
/// exogenous columns when requested, each z-scored with training statistics.
pub fn reservoir_inputs(prep: &PreparedSeries, with_exogenous: bool) -> Vec<Vec<f64>> {
    let start = prep.first_residual;
    let train_end = prep.splits.train.end.max(start + 1);
    let mut columns: Vec<Vec<f64>> = vec![prep.residuals[start..].to_vec()];
    if with_exogenous {
        if let Some(x) = &prep.bundle.exogenous {
            for d in 0..prep.bundle.exogenous_dim() {
                columns.push(x[start..].iter().map(|row| row[d]).collect());
            }
        }
    }
    for col in &mut columns {
        let train: Vec<f64> = col[..train_end - start].to_vec();
        standardize_column(col, &train);
    }
    (0..prep.len() - start)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect()
}

pub fn encode_series(
    prep: &PreparedSeries,
    reservoir: &ReservoirConfig,
    with_exogenous: bool,
) -> Result<StateTrajectory> {
    let inputs = reservoir_inputs(prep, with_exogenous);
    let dim = inputs.first().map_or(1, Vec::len);
    let r = build_reservoir(reservoir, dim).map_err(Error::at("reservoir"))?;
    encode_from(&r, &inputs, &vec![0.0; r.size()], prep.first_residual).map_err(Error::at("encode"))
}

/// Runs the online evaluation loop: the store is warm-started with the pairs
/// whose targets lie in `warm`, then every target in `eval` gets an interval
/// built from data strictly before it.
pub fn evaluate_segment(
    config: &ExperimentConfig,
    prep: &PreparedSeries,
    states: Option<&StateTrajectory>,
    warm: Range<usize>,
    eval: Range<usize>,
    seed: u64,
) -> Result<RunOutput> {
    let h = prep.horizon;
    let needs_states = matches!(config.method, Method::Rescp | Method::Rescqr);
    let state_at = |t: usize| -> Result<&[f64]> {
        match states {
            Some(s) => s.at_time(t).ok_or(Error::InsufficientContext {
                index: t,
                required: s.start_index,
            }),
            None => Ok(&[]),
        }
    };
    if needs_states && states.is_none() {
        return Err(Error::Config(format!(
            "method {} needs reservoir states",
            config.method
        )));
    }
    let first_target = prep.first_residual + h;
    let warm_start = warm.start.max(first_target);

    let mut store = CalibrationStore::new(h, config.window)?;
    for j in warm_start..warm.end {
        let s = j - h;
        store.push(s as i64, state_at(s)?.to_vec(), prep.residuals[j])?;
    }
    if store.is_empty() {
        return Err(Error::Stage {
            stage: "calibration",
            source: Box::new(Error::NoCalibrationData),
        });
    }

    let readout: Option<LinearQuantileModel> = match config.method {
        Method::Rescqr => {
            let cal_states: Vec<&[f64]> = store.entries().map(|e| e.state.as_slice()).collect();
            let levels = rescqr_levels(config.alpha);
            let cfg = crate::rescqr::TrainConfig { seed, ..config.readout };
            Some(fit_readout(&cal_states, &store.residuals(), &levels, &cfg).map_err(Error::at("readout"))?)
        }
        _ => None,
    };

    let mut params = config.rescp_params();
    if let QuantileMode::MonteCarlo { seed: mc_seed, .. } = &mut params.quantile_mode {
        *mc_seed = seed;
    }
    let mut next_push = warm.end;
    let mut intervals = Vec::with_capacity(eval.len());
    let mut ys = Vec::with_capacity(eval.len());
    for j in eval.clone() {
        if j < first_target {
            return Err(Error::InsufficientContext {
                index: j,
                required: first_target,
            });
        }
        let t = j - h;
        if config.online {
            while next_push <= t {
                if next_push >= first_target {
                    let s = next_push - h;
                    store.push(s as i64, state_at(s)?.to_vec(), prep.residuals[next_push])?;
                }
                next_push += 1;
            }
        }
        let center = prep.y_hat[j];
        let pi = match config.method {
            Method::Rescp => rescp_interval(state_at(t)?, t as i64, center, &store, &params)?,
            Method::Rescqr => rescqr_interval(
                readout.as_ref().expect("readout fitted above"),
                state_at(t)?,
                center,
                config.alpha,
                config.beta_search,
            )?,
            Method::Scp => scp_interval(&store.residuals(), center, config.alpha)?,
            Method::Nexcp => nexcp_interval(
                &store.residuals(),
                &store.times(),
                t as i64,
                center,
                config.alpha,
                &config.nexcp,
            )?,
        };
        intervals.push(pi);
        ys.push(prep.bundle.target[j]);
    }

    let report = evaluate_run(&intervals, &ys, config.alpha)?;
    let steps = eval
        .clone()
        .zip(&intervals)
        .zip(&ys)
        .map(|((j, pi), &y)| StepOutput {
            time: prep.bundle.times[j],
            center: pi.center,
            lower: pi.lower,
            upper: pi.upper,
            y,
            covered: pi.contains(y),
            winkler: winkler_score(pi, y),
            ess: pi.ess,
        })
        .collect();
    Ok(RunOutput {
        seed,
        report,
        steps,
        intervals,
    })
}

/// Full pipeline for one seed on an already prepared series.
pub fn run_prepared(config: &ExperimentConfig, prep: &PreparedSeries, seed: u64) -> Result<RunOutput> {
    let states = match config.method {
        Method::Rescp | Method::Rescqr => {
            let rc = ReservoirConfig {
                seed,
                ..config.reservoir.clone()
            };
            let exo = config.method == Method::Rescqr && config.use_exogenous;
            Some(encode_series(prep, &rc, exo)?)
        }
        Method::Scp | Method::Nexcp => None,
    };
    evaluate_segment(
        config,
        prep,
        states.as_ref(),
        prep.splits.calibration.clone(),
        prep.splits.test.clone(),
        seed,
    )
    .map_err(Error::at("evaluation"))
}

/// Load, forecast, encode, calibrate and evaluate for one seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let (bundle, preds) = load_series(config, seed).map_err(Error::at("load"))?;
    let prep = prepare_series(config, bundle, preds)?;
    run_prepared(config, &prep, seed)
}
