//! Reference conformal baselines on signed residuals.
//!
//! * SCP: split conformal with (n+1)-corrected order statistics.
//! * NexCP: weighted quantiles with weights decaying as `rho^age`.

use serde::{Deserialize, Serialize};

use crate::conformal::{PredictionInterval, WeightedCdf};
use crate::error::{Error, Result};
use crate::weighting::{apply_temporal_decay, DecaySchedule, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NexcpConfig {
    pub rho: f64,
}

impl Default for NexcpConfig {
    fn default() -> Self {
        Self { rho: 0.99 }
    }
}

impl NexcpConfig {
    pub const SEARCH_GRID: [f64; 4] = [0.999, 0.99, 0.95, 0.9];

    pub fn validate(&self) -> Result<()> {
        if self.rho > 0.0 && self.rho <= 1.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("NexCP rho must lie in (0, 1], got {}", self.rho)))
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// One-based ranks `(k_lo, k_hi)` of the SCP order statistics.
pub fn scp_ranks(n: usize, alpha: f64) -> (usize, usize) {
    let m = (n + 1) as f64;
    let lo = ((m * alpha / 2.0) + 1e-9).floor() as usize;
    let hi = ((m * (1.0 - alpha / 2.0)) - 1e-9).ceil() as usize;
    (lo.clamp(1, n), hi.clamp(1, n))
}

pub fn scp_interval(residuals: &[f64], center: f64, alpha: f64) -> Result<PredictionInterval> {
    check_alpha(alpha)?;
    if residuals.is_empty() {
        return Err(Error::EmptyInput("calibration residuals"));
    }
    if let Some(index) = residuals.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFiniteInput { index });
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let (k_lo, k_hi) = scp_ranks(n, alpha);
    Ok(PredictionInterval::from_offsets(
        center,
        sorted[k_lo - 1],
        sorted[k_hi - 1],
        alpha,
        alpha / 2.0,
        n as f64,
    ))
}

/// Normalized `rho^(query_time - t_i)` weights.
pub fn nexcp_weights(calib_times: &[i64], query_time: i64, cfg: &NexcpConfig) -> Result<WeightVector> {
    cfg.validate()?;
    let uniform = WeightVector::uniform(calib_times.len())?;
    apply_temporal_decay(
        &uniform,
        calib_times,
        query_time,
        DecaySchedule::Exponential { rho: cfg.rho },
    )
}

pub fn nexcp_interval(
    residuals: &[f64],
    calib_times: &[i64],
    query_time: i64,
    center: f64,
    alpha: f64,
    cfg: &NexcpConfig,
) -> Result<PredictionInterval> {
    check_alpha(alpha)?;
    if residuals.is_empty() {
        return Err(Error::EmptyInput("calibration residuals"));
    }
    let weights = nexcp_weights(calib_times, query_time, cfg)?;
    let cdf = WeightedCdf::new(residuals, &weights.weights)?;
    Ok(PredictionInterval::from_offsets(
        center,
        cdf.quantile(alpha / 2.0),
        cdf.quantile(1.0 - alpha / 2.0),
        alpha,
        alpha / 2.0,
        weights.ess,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::weighted_quantile;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn scp_examples() {
        let pi = scp_interval(&[0.0; 5], 3.0, 0.1).unwrap();
        assert_eq!((pi.lower, pi.upper), (3.0, 3.0));

        let r: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(scp_ranks(9, 0.2), (1, 9));
        let pi = scp_interval(&r, 0.0, 0.2).unwrap();
        assert_eq!((pi.lower, pi.upper), (1.0, 9.0));

        for alpha in [0.01, 0.5, 0.9] {
            let pi = scp_interval(&[2.0], 1.0, alpha).unwrap();
            assert_eq!((pi.lower, pi.upper), (3.0, 3.0));
        }
        assert!(scp_interval(&[], 0.0, 0.1).is_err());
    }

    #[test]
    fn nexcp_examples() {
        let w = nexcp_weights(&[9, 8, 7], 10, &NexcpConfig { rho: 0.5 }).unwrap();
        assert_relative_eq!(w.weights[0], 4.0 / 7.0, epsilon = 1e-15);
        assert_relative_eq!(w.weights[1], 2.0 / 7.0, epsilon = 1e-15);
        assert_relative_eq!(w.weights[2], 1.0 / 7.0, epsilon = 1e-15);

        let r = [3.0, -1.0, 0.5, 2.0, -4.0];
        let t = [1, 2, 3, 4, 5];
        let pi = nexcp_interval(&r, &t, 9, 10.0, 0.2, &NexcpConfig { rho: 1.0 }).unwrap();
        let u = WeightVector::uniform(5).unwrap();
        assert_eq!(pi.lower_offset(), weighted_quantile(&r, &u, 0.1).unwrap());
        assert_eq!(pi.upper_offset(), weighted_quantile(&r, &u, 0.9).unwrap());

        let pi = nexcp_interval(&[1.5], &[3], 4, 0.0, 0.1, &NexcpConfig::default()).unwrap();
        assert_eq!((pi.lower, pi.upper), (1.5, 1.5));
        assert!(nexcp_interval(&[1.0], &[4], 4, 0.0, 0.1, &NexcpConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn scp_width_nonincreasing_in_alpha(
            r in prop::collection::vec(-10.0..10.0f64, 1..200),
            a1 in 0.01..0.98f64,
            d in 0.0..0.5f64,
        ) {
            let a2 = (a1 + d).min(0.99);
            let w1 = scp_interval(&r, 0.0, a1).unwrap().width();
            let w2 = scp_interval(&r, 0.0, a2).unwrap().width();
            prop_assert!(w2 <= w1);
        }
    }
}
