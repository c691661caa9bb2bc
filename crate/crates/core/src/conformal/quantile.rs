use rand::distr::{weighted::WeightedIndex, Distribution};

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::weighting::WeightVector;

/// Slack on the `F(r) >= β` comparison.
///
/// Weights that are uniform only up to ~1e-11 (softmax at very high
/// temperature) must select the same atom as exactly uniform weights when
/// a cumulative sum lands on β.
pub const CDF_TOLERANCE: f64 = 1e-9;

/// Step CDF `F(r) = Σ w_s 1(r_s <= r)` over distinct residual atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCdf {
    atoms: Vec<f64>,
    cumulative: Vec<f64>,
}

impl WeightedCdf {
    pub fn new(residuals: &[f64], weights: &[f64]) -> Result<Self> {
        if residuals.len() != weights.len() {
            return Err(Error::LengthMismatch {
                context: "residuals vs weights",
                left: residuals.len(),
                right: weights.len(),
            });
        }
        if residuals.is_empty() {
            return Err(Error::EmptyInput("residuals"));
        }
        if let Some(index) = residuals.iter().position(|r| !r.is_finite()) {
            return Err(Error::NonFiniteInput { index });
        }
        let mut order: Vec<usize> = (0..residuals.len()).collect();
        order.sort_by(|&a, &b| residuals[a].total_cmp(&residuals[b]));
        Ok(Self::from_sorted(order.into_iter().map(|i| (residuals[i], weights[i]))))
    }

    /// Builds from `(residual, weight)` pairs already sorted by residual.
    pub(crate) fn from_sorted(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut atoms: Vec<f64> = Vec::new();
        let mut cumulative: Vec<f64> = Vec::new();
        let mut acc = 0.0;
        for (r, w) in pairs {
            acc += w;
            if atoms.last() == Some(&r) {
                *cumulative.last_mut().unwrap() = acc;
            } else {
                atoms.push(r);
                cumulative.push(acc);
            }
        }
        Self { atoms, cumulative }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// `inf { r : F(r) >= β }`; `β <= 0` gives the smallest atom.
    pub fn quantile(&self, beta: f64) -> f64 {
        if beta <= 0.0 {
            return self.atoms[0];
        }
        let target = beta - CDF_TOLERANCE;
        let idx = self.cumulative.partition_point(|&c| c < target);
        self.atoms[idx.min(self.atoms.len() - 1)]
    }

    /// Total weight on atoms inside `[lo, hi]`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let below = self.atoms.partition_point(|&a| a < lo);
        let upto = self.atoms.partition_point(|&a| a <= hi);
        if upto <= below {
            return 0.0;
        }
        let base = if below == 0 { 0.0 } else { self.cumulative[below - 1] };
        self.cumulative[upto - 1] - base
    }

    pub fn max_atom_weight(&self) -> f64 {
        let mut prev = 0.0;
        let mut best = 0.0_f64;
        for &c in &self.cumulative {
            best = best.max(c - prev);
            prev = c;
        }
        best
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::Config(format!("quantile level must lie in [0, 1], got {beta}")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Weighted empirical β-quantile of `residuals`.
pub fn weighted_quantile(residuals: &[f64], weights: &WeightVector, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(WeightedCdf::new(residuals, &weights.weights)?.quantile(beta))
}

/// Draws `n_samples` residuals i.i.d. with probabilities `weights` and
/// returns the order statistic of rank `⌈β n_samples⌉` (rank 1 for β = 0).
pub fn mc_quantile(residuals: &[f64], weights: &WeightVector, beta: f64, n_samples: usize, seed: u64) -> Result<f64> {
    check_beta(beta)?;
    let mut samples = mc_sample(residuals, weights, n_samples, seed)?;
    let rank = ((beta * n_samples as f64 - CDF_TOLERANCE).ceil() as usize).clamp(1, n_samples);
    let (_, value, _) = samples.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*value)
}

pub(crate) fn mc_sample(residuals: &[f64], weights: &WeightVector, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    if residuals.len() != weights.len() {
        return Err(Error::LengthMismatch {
            context: "residuals vs weights",
            left: residuals.len(),
            right: weights.len(),
        });
    }
    if residuals.is_empty() {
        return Err(Error::EmptyInput("residuals"));
    }
    if n_samples == 0 {
        return Err(Error::Config("Monte Carlo sample count must be at least 1".into()));
    }
    let dist = WeightedIndex::new(&weights.weights).map_err(|_| Error::UnnormalizedWeights)?;
    let mut rng = rng::seeded(seed, stream::MONTE_CARLO);
    Ok((0..n_samples).map(|_| residuals[dist.sample(&mut rng)]).collect())
}

/// Lower-tail levels searched for the narrowest interval: `{0, step, 2 step, …, α}`.
///
/// When α is an integer multiple of `step` the points are generated as
/// `α k / m` so that α/2 and α land on the grid exactly.
pub fn beta_grid(alpha: f64, grid_step: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if !(grid_step > 0.0) || grid_step > alpha * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "grid step must lie in (0, alpha], got {grid_step} for alpha {alpha}"
        )));
    }
    let ratio = alpha / grid_step;
    let m = ratio.round();
    if (ratio - m).abs() < 1e-9 {
        let m = m as usize;
        return Ok((0..=m).map(|k| alpha * k as f64 / m as f64).collect());
    }
    let mut grid: Vec<f64> = (0..).map(|k| k as f64 * grid_step).take_while(|&b| b < alpha).collect();
    grid.push(alpha);
    Ok(grid)
}

/// Narrowest `[Q(β), Q(1 - α + β)]` over a β grid on a prebuilt CDF.
/// Ties go to the smallest β.
pub fn beta_star_on_cdf(cdf: &WeightedCdf, alpha: f64, grid_step: f64) -> Result<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for beta in beta_grid(alpha, grid_step)? {
        let lo = cdf.quantile(beta);
        let hi = cdf.quantile((1.0 - alpha + beta).min(1.0));
        match best {
            Some((_, blo, bhi)) if hi - lo >= bhi - blo => {}
            _ => best = Some((beta, lo, hi)),
        }
    }
    Ok(best.expect("grid is never empty"))
}

/// Width-minimizing lower-tail level `β*` and its two quantiles.
pub fn beta_star(residuals: &[f64], weights: &WeightVector, alpha: f64, grid_step: f64) -> Result<(f64, f64, f64)> {
    let cdf = WeightedCdf::new(residuals, &weights.weights)?;
    beta_star_on_cdf(&cdf, alpha, grid_step)
}
