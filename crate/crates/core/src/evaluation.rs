//! Interval metrics: coverage gap, width and Winkler score.

use serde::{Deserialize, Serialize};

use crate::conformal::PredictionInterval;
use crate::error::{Error, Result};

/// `100 * (mean(covered) - (1 - alpha))`, in percentage points.
pub fn coverage_gap(covered: &[bool], alpha: f64) -> Result<f64> {
    if covered.is_empty() {
        return Err(Error::EmptyInput("coverage indicators"));
    }
    let hits = covered.iter().filter(|&&c| c).count() as f64;
    Ok(100.0 * (hits / covered.len() as f64 - (1.0 - alpha)))
}

/// Width plus `2/alpha` times the distance by which `y` misses the interval.
pub fn winkler_score(interval: &PredictionInterval, y: f64) -> f64 {
    let width = interval.width();
    let penalty = 2.0 / interval.alpha;
    if y < interval.lower {
        width + penalty * (interval.lower - y)
    } else if y > interval.upper {
        width + penalty * (y - interval.upper)
    } else {
        width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub covered: bool,
    pub width: f64,
    pub winkler: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub delta_cov: f64,
    pub coverage: f64,
    pub mean_pi_width: f64,
    pub mean_winkler: f64,
    pub n_test: usize,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_step: Option<Vec<StepRecord>>,
}

pub fn evaluate_run(intervals: &[PredictionInterval], y_true: &[f64], alpha: f64) -> Result<EvalReport> {
    if intervals.len() != y_true.len() {
        return Err(Error::LengthMismatch {
            context: "intervals vs observations",
            left: intervals.len(),
            right: y_true.len(),
        });
    }
    if intervals.is_empty() {
        return Err(Error::EmptyInput("test intervals"));
    }
    let steps: Vec<StepRecord> = intervals
        .iter()
        .zip(y_true)
        .map(|(pi, &y)| StepRecord {
            covered: pi.contains(y),
            width: pi.width(),
            winkler: winkler_score(&PredictionInterval { alpha, ..*pi }, y),
        })
        .collect();
    let n = steps.len() as f64;
    let covered: Vec<bool> = steps.iter().map(|s| s.covered).collect();
    Ok(EvalReport {
        delta_cov: coverage_gap(&covered, alpha)?,
        coverage: covered.iter().filter(|&&c| c).count() as f64 / n,
        mean_pi_width: steps.iter().map(|s| s.width).sum::<f64>() / n,
        mean_winkler: steps.iter().map(|s| s.winkler).sum::<f64>() / n,
        n_test: steps.len(),
        alpha,
        per_step: Some(steps),
    })
}

/// Mean and sample standard deviation of each headline metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub delta_cov: MeanStd,
    pub coverage: MeanStd,
    pub mean_pi_width: MeanStd,
    pub mean_winkler: MeanStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let std = if n > 1.0 {
            (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Mean of per-run (or per-series) means, with spread across runs.
pub fn aggregate_reports(reports: &[EvalReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("reports"));
    }
    Ok(AggregateReport {
        runs: reports.len(),
        delta_cov: MeanStd::of(reports.iter().map(|r| r.delta_cov)),
        coverage: MeanStd::of(reports.iter().map(|r| r.coverage)),
        mean_pi_width: MeanStd::of(reports.iter().map(|r| r.mean_pi_width)),
        mean_winkler: MeanStd::of(reports.iter().map(|r| r.mean_winkler)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interval(lower: f64, upper: f64, alpha: f64) -> PredictionInterval {
        PredictionInterval {
            lower,
            upper,
            alpha,
            beta_star: alpha / 2.0,
            ess: 1.0,
            center: (lower + upper) / 2.0,
        }
    }

    #[test]
    fn coverage_gap_examples() {
        let mut c = vec![true; 90];
        c.extend([false; 10]);
        assert!(coverage_gap(&c, 0.1).unwrap().abs() < 1e-12);
        let mut c = vec![true; 85];
        c.extend([false; 15]);
        assert!((coverage_gap(&c, 0.1).unwrap() + 5.0).abs() < 1e-12);
        assert!((coverage_gap(&[true; 7], 0.1).unwrap() - 10.0).abs() < 1e-12);
        assert!(coverage_gap(&[], 0.1).is_err());
    }

    #[test]
    fn winkler_examples() {
        let pi = interval(0.0, 10.0, 0.1);
        assert!((winkler_score(&pi, 5.0) - 10.0).abs() < 1e-12);
        assert!((winkler_score(&pi, 12.0) - 50.0).abs() < 1e-12);
        assert!((winkler_score(&pi, -1.0) - 30.0).abs() < 1e-12);
        assert_eq!(winkler_score(&pi, 10.0), 10.0);
    }

    #[test]
    fn evaluate_examples() {
        let ys = [1.0, 2.0, 3.0];
        let intervals: Vec<_> = ys.iter().map(|&y| interval(y, y, 0.1)).collect();
        let r = evaluate_run(&intervals, &ys, 0.1).unwrap();
        assert!((r.delta_cov - 10.0).abs() < 1e-12);
        assert_eq!((r.mean_pi_width, r.mean_winkler), (0.0, 0.0));

        let boundary = [interval(0.0, 1.0, 0.1), interval(0.0, 1.0, 0.1)];
        let r = evaluate_run(&boundary, &[0.0, 1.0], 0.1).unwrap();
        assert_eq!(r.coverage, 1.0);

        let r = evaluate_run(&[interval(0.0, 10.0, 0.1)], &[12.0], 0.1).unwrap();
        assert!((r.delta_cov + 90.0).abs() < 1e-12);
        assert!((r.mean_pi_width - 10.0).abs() < 1e-12);
        assert!((r.mean_winkler - 50.0).abs() < 1e-12);

        assert!(evaluate_run(&boundary, &[0.0], 0.1).is_err());
    }

    #[test]
    fn aggregate_mean_and_std() {
        let mk = |w: f64| EvalReport {
            delta_cov: 0.0,
            coverage: 0.9,
            mean_pi_width: w,
            mean_winkler: w,
            n_test: 1,
            alpha: 0.1,
            per_step: None,
        };
        let a = aggregate_reports(&[mk(1.0), mk(3.0)]).unwrap();
        assert_eq!(a.mean_pi_width.mean, 2.0);
        assert!((a.mean_pi_width.std - 2f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn metric_properties(
            rows in prop::collection::vec((-5.0..5.0f64, 0.0..3.0f64, -8.0..8.0f64), 1..60),
            alpha in 0.01..0.5f64,
            scale in 0.1..10.0f64,
        ) {
            let intervals: Vec<_> = rows.iter().map(|&(lo, w, _)| interval(lo, lo + w, alpha)).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let r = evaluate_run(&intervals, &ys, alpha).unwrap();
            prop_assert!(r.mean_winkler >= r.mean_pi_width);
            prop_assert!(r.delta_cov >= -100.0 * (1.0 - alpha) - 1e-9 && r.delta_cov <= 100.0 * alpha + 1e-9);
            for (pi, &y) in intervals.iter().zip(&ys) {
                let w = winkler_score(pi, y);
                prop_assert_eq!(w == pi.width(), pi.contains(y));
            }
            let scaled: Vec<_> = intervals.iter().map(|p| interval(p.lower * scale, p.upper * scale, alpha)).collect();
            let ys2: Vec<f64> = ys.iter().map(|y| y * scale).collect();
            let s = evaluate_run(&scaled, &ys2, alpha).unwrap();
            prop_assert!((s.mean_pi_width - scale * r.mean_pi_width).abs() < 1e-9 * (1.0 + s.mean_pi_width));
            prop_assert!((s.mean_winkler - scale * r.mean_winkler).abs() < 1e-9 * (1.0 + s.mean_winkler));
            prop_assert_eq!(s.delta_cov, r.delta_cov);
        }
    }
}
