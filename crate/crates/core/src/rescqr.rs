//! Quantile-regression readout over reservoir states.
//!
//! A linear map from the state `h_s` to a fixed set of residual quantile
//! levels, fitted on calibration pairs `(h_s, r_{s+H})` by minimizing the
//! summed pinball loss with mini-batch Adam.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::conformal::PredictionInterval;
use crate::error::{Error, Result};
use crate::reservoir::dot;
use crate::rng::{self, stream};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const LEVEL_TOL: f64 = 1e-9;

/// `(1-β)(q-r)` when `q >= r`, `β(r-q)` otherwise.
pub fn pinball_loss(q_pred: f64, r: f64, beta: f64) -> f64 {
    if q_pred >= r {
        (1.0 - beta) * (q_pred - r)
    } else {
        beta * (r - q_pred)
    }
}

/// Derivative of [`pinball_loss`] in `q_pred` (right derivative at the kink).
fn pinball_slope(q_pred: f64, r: f64, beta: f64) -> f64 {
    if q_pred >= r {
        1.0 - beta
    } else {
        -beta
    }
}

/// Readout levels for a miscoverage `alpha`: `{kα/20, 1-α+kα/20 : k = 1..19}`.
pub fn rescqr_levels(alpha: f64) -> Vec<f64> {
    let mut levels: Vec<f64> = (1..20)
        .map(|k| alpha * k as f64 / 20.0)
        .chain((1..20).map(|k| 1.0 - alpha + alpha * k as f64 / 20.0))
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < LEVEL_TOL);
    levels
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQuantileModel {
    /// One row of length `D_h` per level.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub levels: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    input_dim: usize,
    levels: Vec<f64>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl LinearQuantileModel {
    pub fn zeros(levels: Vec<f64>, input_dim: usize) -> Result<Self> {
        validate_levels(&levels)?;
        Ok(Self {
            weights: vec![vec![0.0; input_dim]; levels.len()],
            biases: vec![0.0; levels.len()],
            levels,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Raw per-level predictions, possibly crossing.
    pub fn predict_raw(&self, state: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, state) + b)
            .collect()
    }

    /// Predictions rearranged by sorting so they are nondecreasing in level.
    pub fn predict(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "readout state",
                expected: self.input_dim(),
                actual: state.len(),
            });
        }
        let mut q = self.predict_raw(state);
        q.sort_by(f64::total_cmp);
        Ok(q)
    }

    pub fn level_index(&self, level: f64) -> Result<usize> {
        self.levels
            .iter()
            .position(|&l| (l - level).abs() < LEVEL_TOL)
            .ok_or_else(|| Error::LevelNotFitted {
                requested: level,
                fitted: self.levels.clone(),
            })
    }

    /// Mean (over samples) pinball loss summed over levels.
    pub fn loss(&self, states: &[&[f64]], residuals: &[f64]) -> f64 {
        let mut total = 0.0;
        for (h, &r) in states.iter().zip(residuals) {
            for (m, q) in self.predict_raw(h).into_iter().enumerate() {
                total += pinball_loss(q, r, self.levels[m]);
            }
        }
        total / states.len().max(1) as f64
    }

    /// Loss and its gradient with respect to `(weights, biases)`.
    pub fn loss_and_gradient(&self, states: &[&[f64]], residuals: &[f64]) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
        let d = self.input_dim();
        let mut gw = vec![vec![0.0; d]; self.levels.len()];
        let mut gb = vec![0.0; self.levels.len()];
        let mut total = 0.0;
        let inv_n = 1.0 / states.len().max(1) as f64;
        for (h, &r) in states.iter().zip(residuals) {
            for (m, q) in self.predict_raw(h).into_iter().enumerate() {
                let beta = self.levels[m];
                total += pinball_loss(q, r, beta);
                let g = pinball_slope(q, r, beta) * inv_n;
                gb[m] += g;
                gw[m].iter_mut().zip(h.iter()).for_each(|(a, x)| *a += g * x);
            }
        }
        (total * inv_n, gw, gb)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            input_dim: self.input_dim(),
            levels: self.levels.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion(file.format_version));
        }
        validate_levels(&file.levels)?;
        let m = file.levels.len();
        if file.biases.len() != m || file.weights.len() != m {
            return Err(Error::DimensionMismatch {
                context: "readout rows",
                expected: m,
                actual: file.weights.len().min(file.biases.len()),
            });
        }
        if let Some(row) = file.weights.iter().find(|r| r.len() != file.input_dim) {
            return Err(Error::DimensionMismatch {
                context: "readout weight row",
                expected: file.input_dim,
                actual: row.len(),
            });
        }
        Ok(Self {
            weights: file.weights,
            biases: file.biases,
            levels: file.levels,
        })
    }
}

fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Config("at least one quantile level is required".into()));
    }
    if levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::Config(format!("quantile levels must lie in (0, 1): {levels:?}")));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "quantile levels must be strictly increasing: {levels:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Halve the step size whenever the monitored loss has not improved for
    /// `patience` consecutive epochs.
    HalveOnPlateau {
        patience: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub seed: u64,
    /// Leading fraction of the samples held out for model selection.
    pub validation_fraction: f64,
    /// Stop after this many epochs without improvement.
    pub early_stopping: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 0.003,
            schedule: LrSchedule::HalveOnPlateau { patience: 10 },
            seed: 0,
            validation_fraction: 0.25,
            early_stopping: Some(40),
        }
    }
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step<'a>(&mut self, params: impl Iterator<Item = (&'a mut f64, f64)>) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (i, (p, g)) in params.enumerate() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            *p -= self.lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

/// Fits the readout; returns the parameters with the lowest monitored loss
/// (validation loss, or training loss when nothing is held out). The
/// all-zero initialization is itself a candidate.
pub fn fit_readout(
    states: &[&[f64]],
    residuals: &[f64],
    levels: &[f64],
    cfg: &TrainConfig,
) -> Result<LinearQuantileModel> {
    if states.is_empty() {
        return Err(Error::EmptyInput("readout training data"));
    }
    if states.len() != residuals.len() {
        return Err(Error::LengthMismatch {
            context: "states vs residuals",
            left: states.len(),
            right: residuals.len(),
        });
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
    }
    let dim = states[0].len();
    if let Some(bad) = states.iter().find(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch {
            context: "readout state",
            expected: dim,
            actual: bad.len(),
        });
    }
    let mut model = LinearQuantileModel::zeros(levels.to_vec(), dim)?;

    let n_val = ((states.len() as f64) * cfg.validation_fraction).floor() as usize;
    let n_val = if n_val >= states.len() { 0 } else { n_val };
    let (val_states, train_states) = states.split_at(n_val);
    let (val_res, train_res) = residuals.split_at(n_val);
    let monitor = |m: &LinearQuantileModel| {
        if n_val > 0 {
            m.loss(val_states, val_res)
        } else {
            m.loss(train_states, train_res)
        }
    };

    let mut best_loss = monitor(&model);
    let mut best = model.clone();
    let n_params = levels.len() * (dim + 1);
    let mut adam = Adam::new(n_params, cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_states.len()).collect();
    let mut rng = rng::seeded(cfg.seed, stream::MINIBATCH);
    let mut since_best = 0usize;
    let mut since_lr_change = 0usize;
    let mut batch_states: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut batch_res: Vec<f64> = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch_states.clear();
            batch_res.clear();
            for &i in chunk {
                batch_states.push(train_states[i]);
                batch_res.push(train_res[i]);
            }
            let (_, gw, gb) = model.loss_and_gradient(&batch_states, &batch_res);
            let params = model
                .weights
                .iter_mut()
                .zip(&mut model.biases)
                .flat_map(|(w, b)| w.iter_mut().chain(std::iter::once(b)));
            let grads = gw
                .iter()
                .zip(&gb)
                .flat_map(|(w, &b)| w.iter().copied().chain(std::iter::once(b)));
            adam.step(params.zip(grads));
        }
        let loss = monitor(&model);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if loss < best_loss {
            best_loss = loss;
            best = model.clone();
            since_best = 0;
            since_lr_change = 0;
        } else {
            since_best += 1;
            since_lr_change += 1;
        }
        if let LrSchedule::HalveOnPlateau { patience } = cfg.schedule {
            if since_lr_change >= patience.max(1) {
                adam.lr *= 0.5;
                since_lr_change = 0;
            }
        }
        if cfg.early_stopping.is_some_and(|p| since_best >= p) {
            log::debug!("readout early stop at epoch {epoch}, best loss {best_loss}");
            break;
        }
    }
    Ok(best)
}

/// Interval from the readout's rearranged quantiles.
///
/// Without β search the model must carry `α/2` and `1-α/2`; with it, every
/// fitted pair `(β, 1-α+β)` with `β <= α` is a candidate and the narrowest
/// wins (ties to the smallest β).
pub fn rescqr_interval(
    model: &LinearQuantileModel,
    state: &[f64],
    center: f64,
    alpha: f64,
    beta_search: bool,
) -> Result<PredictionInterval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let q = model.predict(state)?;
    if !beta_search {
        let lo = model.level_index(alpha / 2.0)?;
        let hi = model.level_index(1.0 - alpha / 2.0)?;
        return Ok(PredictionInterval::from_offsets(
            center,
            q[lo],
            q[hi],
            alpha,
            alpha / 2.0,
            f64::NAN,
        ));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for (i, &beta) in model.levels.iter().enumerate() {
        if beta > alpha + LEVEL_TOL {
            break;
        }
        let Ok(j) = model.level_index(1.0 - alpha + beta) else {
            continue;
        };
        match best {
            Some((_, blo, bhi)) if q[j] - q[i] >= bhi - blo => {}
            _ => best = Some((beta, q[i], q[j])),
        }
    }
    let (beta, lo, hi) = best.ok_or_else(|| Error::LevelNotFitted {
        requested: 1.0 - alpha,
        fitted: model.levels.clone(),
    })?;
    Ok(PredictionInterval::from_offsets(center, lo, hi, alpha, beta, f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball_loss(5.0, 5.0, 0.3), 0.0);
        assert!((pinball_loss(0.0, 1.0, 0.9) - 0.9).abs() < 1e-15);
        assert!((pinball_loss(1.0, 0.0, 0.9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn levels_grid() {
        let l = rescqr_levels(0.1);
        assert_eq!(l.len(), 38);
        assert!(l.windows(2).all(|w| w[0] < w[1]));
        let m = LinearQuantileModel::zeros(l, 1).unwrap();
        assert!(m.level_index(0.05).is_ok());
        assert!(m.level_index(0.95).is_ok());
        assert!(m.level_index(0.5).is_err());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let states = [&[0.3, -0.1][..], &[0.5, 0.2][..]];
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let m = fit_readout(&states, &[1.0, 2.0], &[0.1, 0.9], &cfg).unwrap();
        assert_eq!(m, LinearQuantileModel::zeros(vec![0.1, 0.9], 2).unwrap());
    }

    #[test]
    fn fit_errors() {
        let cfg = TrainConfig::default();
        assert!(fit_readout(&[], &[], &[0.5], &cfg).is_err());
        assert!(fit_readout(&[&[1.0][..]], &[1.0, 2.0], &[0.5], &cfg).is_err());
        assert!(fit_readout(&[&[1.0][..]], &[1.0], &[0.5, 0.5], &cfg).is_err());
        assert!(fit_readout(&[&[1.0][..]], &[1.0], &[1.0], &cfg).is_err());
    }

    #[test]
    fn median_of_uniform_residuals() {
        let mut g = rng::seeded(3, 0);
        let residuals: Vec<f64> = (0..5000).map(|_| g.random::<f64>()).collect();
        let one = [1.0];
        let states: Vec<&[f64]> = vec![&one[..]; residuals.len()];
        let cfg = TrainConfig {
            epochs: 60,
            ..Default::default()
        };
        let m = fit_readout(&states, &residuals, &[0.5], &cfg).unwrap();
        let fitted = m.weights[0][0] + m.biases[0];
        let mut sorted = residuals.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        assert!((fitted - median).abs() < 0.05, "{fitted} vs {median}");
    }

    #[test]
    fn fixed_model_interval() {
        let m = LinearQuantileModel {
            weights: vec![vec![0.0; 3]; 2],
            biases: vec![-1.0, 1.0],
            levels: vec![0.05, 0.95],
        };
        let pi = rescqr_interval(&m, &[0.2, 0.3, 0.4], 10.0, 0.1, false).unwrap();
        assert_eq!((pi.lower, pi.upper), (9.0, 11.0));
        assert!(matches!(
            rescqr_interval(&m, &[0.0; 3], 0.0, 0.2, false),
            Err(Error::LevelNotFitted { .. })
        ));
    }

    #[test]
    fn crossed_outputs_are_rearranged() {
        let m = LinearQuantileModel {
            weights: vec![vec![1.0], vec![-1.0]],
            biases: vec![0.0, 0.0],
            levels: vec![0.05, 0.95],
        };
        let pi = rescqr_interval(&m, &[2.0], 0.0, 0.1, false).unwrap();
        assert_eq!((pi.lower, pi.upper), (-2.0, 2.0));
    }

    #[test]
    fn beta_search_picks_narrowest_pair() {
        let levels = rescqr_levels(0.2);
        // Concave quantile function: larger β gives narrower pairs.
        let biases: Vec<f64> = levels.iter().map(|b| -10.0 * (1.0 - b).powi(3)).collect();
        let m = LinearQuantileModel {
            weights: vec![vec![0.0]; levels.len()],
            biases: biases.clone(),
            levels: levels.clone(),
        };
        let pi = rescqr_interval(&m, &[0.0], 0.0, 0.2, true).unwrap();
        let mut best = f64::INFINITY;
        for (i, &b) in levels.iter().enumerate() {
            if let Some(j) = levels.iter().position(|&l| (l - (0.8 + b)).abs() < 1e-9) {
                best = best.min(biases[j] - biases[i]);
            }
        }
        assert!((pi.width() - best).abs() < 1e-12);
        assert!(pi.beta_star > 0.1);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = LinearQuantileModel {
            weights: vec![vec![0.5, -0.25], vec![1.0 / 3.0, 2.0]],
            biases: vec![-1.0, 1e-17],
            levels: vec![0.05, 0.95],
        };
        m.save(&path).unwrap();
        assert_eq!(LinearQuantileModel::load(&path).unwrap(), m);
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 9");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(LinearQuantileModel::load(&path), Err(Error::FormatVersion(9))));
    }
}
