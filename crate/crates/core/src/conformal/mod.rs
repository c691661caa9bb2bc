//! Reservoir conformal intervals.
//!
//! For a query state `h_t` the stored calibration states are scored by
//! similarity, turned into softmax weights (optionally discounted by age),
//! and the weighted empirical CDF of the paired residuals yields the
//! interval offsets around the point forecast.

mod quantile;
mod store;

use serde::{Deserialize, Serialize};

pub use quantile::{
    beta_grid, beta_star, beta_star_on_cdf, mc_quantile, weighted_quantile, WeightedCdf, CDF_TOLERANCE,
};
pub use store::{push_calibration, CalibrationEntry, CalibrationStore};

use crate::error::{Error, Result};
use crate::reservoir::norm;
use crate::weighting::{
    apply_temporal_decay, cosine_with_norms, softmax_weights, DecaySchedule, Similarity, WeightVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    /// Lower-tail level actually used; `alpha / 2` for symmetric intervals.
    pub beta_star: f64,
    pub ess: f64,
    /// Point forecast the offsets are added to.
    pub center: f64,
}

impl PredictionInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Inclusive at both ends.
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn lower_offset(&self) -> f64 {
        self.lower - self.center
    }

    pub fn upper_offset(&self) -> f64 {
        self.upper - self.center
    }

    pub(crate) fn from_offsets(center: f64, lo: f64, hi: f64, alpha: f64, beta_star: f64, ess: f64) -> Self {
        Self {
            lower: center + lo,
            upper: center + hi,
            alpha,
            beta_star,
            ess,
            center,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantileMode {
    #[default]
    Exact,
    /// Empirical quantiles of `n_samples` residuals resampled by weight.
    MonteCarlo { n_samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescpParams {
    pub alpha: f64,
    pub temperature: f64,
    pub similarity: Similarity,
    pub decay: DecaySchedule,
    pub beta_search: bool,
    /// Defaults to `alpha / 20` when unset.
    pub grid_step: Option<f64>,
    pub quantile_mode: QuantileMode,
}

impl Default for RescpParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            temperature: 0.1,
            similarity: Similarity::Cosine,
            decay: DecaySchedule::None,
            beta_search: false,
            grid_step: None,
            quantile_mode: QuantileMode::Exact,
        }
    }
}

impl RescpParams {
    pub fn grid_step(&self) -> f64 {
        self.grid_step.unwrap_or(self.alpha / 20.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        self.decay.validate()?;
        if self.beta_search {
            beta_grid(self.alpha, self.grid_step())?;
        }
        if let QuantileMode::MonteCarlo { n_samples: 0, .. } = self.quantile_mode {
            return Err(Error::Config("Monte Carlo sample count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Similarity weights of every store entry for `query_state` at `query_time`,
/// in store order.
pub fn rescp_weights(
    query_state: &[f64],
    query_time: i64,
    store: &CalibrationStore,
    params: &RescpParams,
) -> Result<WeightVector> {
    if store.is_empty() {
        return Err(Error::NoCalibrationData);
    }
    let qn = norm(query_state);
    let scores = store
        .entries()
        .map(|e| {
            if e.state.len() != query_state.len() {
                return Err(Error::DimensionMismatch {
                    context: "query state",
                    expected: e.state.len(),
                    actual: query_state.len(),
                });
            }
            Ok(match params.similarity {
                Similarity::Cosine => cosine_with_norms(query_state, qn, &e.state, e.norm),
                Similarity::Dot => crate::reservoir::dot(query_state, &e.state),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let weights = softmax_weights(&scores, params.temperature)?;
    apply_temporal_decay(&weights, &store.times(), query_time, params.decay)
}

/// Builds the interval for the forecast `center` issued at `query_time`.
pub fn rescp_interval(
    query_state: &[f64],
    query_time: i64,
    center: f64,
    store: &CalibrationStore,
    params: &RescpParams,
) -> Result<PredictionInterval> {
    params.validate()?;
    let weights = rescp_weights(query_state, query_time, store, params)?;
    let cdf = match params.quantile_mode {
        QuantileMode::Exact => {
            let entries: Vec<&CalibrationEntry> = store.entries().collect();
            WeightedCdf::from_sorted(
                store
                    .sorted_positions()
                    .map(|i| (entries[i].residual, weights.weights[i])),
            )
        }
        QuantileMode::MonteCarlo { n_samples, seed } => {
            let step_seed = seed ^ (query_time as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let mut samples = quantile::mc_sample(&store.residuals(), &weights, n_samples, step_seed)?;
            samples.sort_by(f64::total_cmp);
            let w = 1.0 / n_samples as f64;
            WeightedCdf::from_sorted(samples.into_iter().map(|r| (r, w)))
        }
    };
    interval_from_cdf(&cdf, center, params, weights.ess)
}

pub(crate) fn interval_from_cdf(
    cdf: &WeightedCdf,
    center: f64,
    params: &RescpParams,
    ess: f64,
) -> Result<PredictionInterval> {
    let alpha = params.alpha;
    let (beta, lo, hi) = if params.beta_search {
        beta_star_on_cdf(cdf, alpha, params.grid_step())?
    } else {
        (alpha / 2.0, cdf.quantile(alpha / 2.0), cdf.quantile(1.0 - alpha / 2.0))
    };
    Ok(PredictionInterval::from_offsets(center, lo, hi, alpha, beta, ess))
}
