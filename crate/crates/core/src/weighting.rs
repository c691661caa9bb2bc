//! Similarity-derived weights over calibration entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

impl std::str::FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Similarity::Cosine),
            "dot" => Ok(Similarity::Dot),
            other => Err(Error::Config(format!(
                "unknown similarity '{other}' (expected cosine or dot)"
            ))),
        }
    }
}

/// Discount applied to a calibration weight as a function of its age.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DecaySchedule {
    #[default]
    None,
    /// `γ(Δ) = 1 / Δ`
    Linear,
    /// `γ(Δ) = rho^Δ`
    Exponential { rho: f64 },
}

impl DecaySchedule {
    pub fn validate(&self) -> Result<()> {
        if let DecaySchedule::Exponential { rho } = *self {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::Config(format!("decay base must lie in (0, 1], got {rho}")));
            }
        }
        Ok(())
    }

    /// `γ(Δ) / γ(Δ_min)`, which keeps the largest factor at 1 and avoids underflow.
    fn relative_factor(&self, lag: i64, min_lag: i64) -> f64 {
        match *self {
            DecaySchedule::None => 1.0,
            DecaySchedule::Linear => min_lag as f64 / lag as f64,
            DecaySchedule::Exponential { rho } => rho.powf((lag - min_lag) as f64),
        }
    }
}

impl std::str::FromStr for DecaySchedule {
    type Err = Error;

    /// Accepts `none`, `linear` and `exp:<rho>`.
    fn from_str(s: &str) -> Result<Self> {
        let schedule = match s {
            "none" => DecaySchedule::None,
            "linear" => DecaySchedule::Linear,
            other => match other
                .strip_prefix("exp:")
                .or_else(|| other.strip_prefix("exponential:"))
            {
                Some(rho) => DecaySchedule::Exponential {
                    rho: rho
                        .parse()
                        .map_err(|_| Error::Config(format!("bad decay base '{rho}'")))?,
                },
                None => {
                    return Err(Error::Config(format!(
                        "unknown decay '{other}' (expected none, linear or exp:<rho>)"
                    )))
                }
            },
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Normalized nonnegative weights together with their effective sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub ess: f64,
}

impl WeightVector {
    /// Normalizes arbitrary nonnegative masses.
    pub fn from_unnormalized(mut masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0 && total.is_finite()) || masses.iter().any(|&m| m < 0.0) {
            return Err(Error::UnnormalizedWeights);
        }
        masses.iter_mut().for_each(|m| *m /= total);
        let ess = effective_sample_size(&masses)?;
        Ok(Self { weights: masses, ess })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_unnormalized(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Similarity of `query` to each calibration state.
///
/// Cosine similarity against a zero-norm vector is defined as 0.
pub fn similarity_scores<'a, I>(query: &[f64], calib_states: I, kind: Similarity) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let qn = norm(query);
    calib_states
        .into_iter()
        .map(|s| {
            if s.len() != query.len() {
                return Err(Error::DimensionMismatch {
                    context: "calibration state",
                    expected: query.len(),
                    actual: s.len(),
                });
            }
            Ok(match kind {
                Similarity::Dot => dot(query, s),
                Similarity::Cosine => cosine_with_norms(query, qn, s, norm(s)),
            })
        })
        .collect()
}

pub(crate) fn cosine_with_norms(a: &[f64], a_norm: f64, b: &[f64], b_norm: f64) -> f64 {
    if a_norm == 0.0 || b_norm == 0.0 {
        log::debug!("cosine similarity with a zero-norm state; using score 0");
        return 0.0;
    }
    (dot(a, b) / (a_norm * b_norm)).clamp(-1.0, 1.0)
}

/// Softmax of `scores / temperature` with max subtraction.
pub fn softmax_weights(scores: &[f64], temperature: f64) -> Result<WeightVector> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if scores.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput { index });
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let masses = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    WeightVector::from_unnormalized(masses)
}

/// Multiplies each weight by `γ(query_time - calib_time)` and renormalizes.
pub fn apply_temporal_decay(
    w: &WeightVector,
    calib_times: &[i64],
    query_time: i64,
    schedule: DecaySchedule,
) -> Result<WeightVector> {
    if calib_times.len() != w.len() {
        return Err(Error::LengthMismatch {
            context: "weights vs calibration times",
            left: w.len(),
            right: calib_times.len(),
        });
    }
    schedule.validate()?;
    if let Some(&calib_time) = calib_times.iter().find(|&&t| t >= query_time) {
        return Err(Error::NotInPast { calib_time, query_time });
    }
    if schedule == DecaySchedule::None {
        return Ok(w.clone());
    }
    let min_lag = calib_times.iter().map(|&t| query_time - t).min().unwrap_or(1);
    let masses = w
        .weights
        .iter()
        .zip(calib_times)
        .map(|(wi, &t)| wi * schedule.relative_factor(query_time - t, min_lag))
        .collect();
    WeightVector::from_unnormalized(masses)
}

/// `(Σ w_i²)^{-1}`, clamped to `[1, n]` against rounding.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || total <= 0.0 {
        return Err(Error::UnnormalizedWeights);
    }
    let n = weights.len() as f64;
    // Equal weights give exactly n; summing n copies of 1/n² may not.
    if weights.iter().all(|&w| w == weights[0]) {
        return Ok(n);
    }
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    Ok((1.0 / sq).clamp(1.0, n))
}
