//! Point forecasts feeding the calibration residuals.
//!
//! The built-in forecaster is a direct `H`-step autoregression fitted by
//! (ridge-regularized) least squares on a window of `W` lags plus an
//! unpenalized intercept. Externally produced predictions enter through
//! [`ForecastSet::new`].

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    /// Lag coefficients, oldest lag first.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub window: usize,
    pub horizon: usize,
}

impl ArModel {
    /// Earliest target index that has a full lag window.
    pub fn first_target(&self) -> usize {
        self.window + self.horizon - 1
    }

    /// Forecast of `series[target]` from the window ending at `target - horizon`.
    pub fn predict_at(&self, series: &[f64], target: usize) -> Result<f64> {
        let required = self.first_target();
        if target < required {
            return Err(Error::InsufficientContext {
                index: target,
                required,
            });
        }
        if target >= series.len() {
            return Err(Error::InsufficientContext {
                index: target,
                required: series.len().saturating_sub(1),
            });
        }
        let end = target - self.horizon + 1;
        let lags = &series[end - self.window..end];
        Ok(self.intercept + self.coefficients.iter().zip(lags).map(|(a, y)| a * y).sum::<f64>())
    }
}

pub fn fit_ar_forecaster(series: &[f64], window: usize, horizon: usize, ridge: f64) -> Result<ArModel> {
    if window == 0 || horizon == 0 {
        return Err(Error::Config("window and horizon must be at least 1".into()));
    }
    if !(ridge >= 0.0) {
        return Err(Error::Config(format!("ridge must be nonnegative, got {ridge}")));
    }
    if series.len() <= window + horizon {
        return Err(Error::InsufficientContext {
            index: series.len(),
            required: window + horizon + 1,
        });
    }
    if let Some(index) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput { index });
    }
    let p = window + 1;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for t in (window - 1)..(series.len() - horizon) {
        row[..window].copy_from_slice(&series[t + 1 - window..=t]);
        row[window] = 1.0;
        let y = series[t + horizon];
        for i in 0..p {
            rhs[i] += row[i] * y;
            for j in 0..=i {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
    }
    for i in 0..window {
        gram[(i, i)] += ridge;
    }
    let max_diag = (0..p).map(|i| gram[(i, i)]).fold(0.0_f64, f64::max);
    let chol = gram.cholesky().ok_or(Error::SingularSystem)?;
    let l = chol.l_dirty();
    let min_pivot = (0..p).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-12 * max_diag {
        return Err(Error::SingularSystem);
    }
    let sol = chol.solve(&rhs);
    Ok(ArModel {
        coefficients: sol.iter().take(window).copied().collect(),
        intercept: sol[window],
        window,
        horizon,
    })
}

/// Aligned truths, predictions and residuals `r_t = y_t - ŷ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub times: Vec<i64>,
    pub y_true: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub horizon: usize,
    pub residuals: Vec<f64>,
}

impl ForecastSet {
    /// Residuals are always recomputed here.
    pub fn new(times: Vec<i64>, y_true: Vec<f64>, y_hat: Vec<f64>, horizon: usize) -> Result<Self> {
        if times.len() != y_true.len() {
            return Err(Error::LengthMismatch {
                context: "forecast times vs truths",
                left: times.len(),
                right: y_true.len(),
            });
        }
        if y_hat.len() != y_true.len() {
            return Err(Error::LengthMismatch {
                context: "predictions vs truths",
                left: y_hat.len(),
                right: y_true.len(),
            });
        }
        let residuals = y_true.iter().zip(&y_hat).map(|(y, p)| y - p).collect();
        Ok(Self {
            times,
            y_true,
            y_hat,
            horizon,
            residuals,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Forecasts and residuals for every target index in `range`.
pub fn predict_and_residuals(model: &ArModel, series: &[f64], range: Range<usize>) -> Result<ForecastSet> {
    if range.end > series.len() {
        return Err(Error::InsufficientContext {
            index: range.end,
            required: series.len(),
        });
    }
    let mut y_hat = Vec::with_capacity(range.len());
    for t in range.clone() {
        y_hat.push(model.predict_at(series, t)?);
    }
    ForecastSet::new(
        range.clone().map(|t| t as i64).collect(),
        series[range].to_vec(),
        y_hat,
        model.horizon,
    )
}
