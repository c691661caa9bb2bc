//! Independent reference computations checked against the library.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rescp::prelude::*;
use rescp::weighting::WeightVector;

/// Smallest residual value whose cumulative weight reaches β, by direct
/// enumeration over the distinct values.
fn brute_force_quantile(residuals: &[f64], weights: &[f64], beta: f64) -> f64 {
    let mut values = residuals.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    for v in &values {
        let mass: f64 = residuals
            .iter()
            .zip(weights)
            .filter(|(r, _)| *r <= v)
            .map(|(_, w)| w)
            .sum();
        if mass >= beta - 1e-9 {
            return *v;
        }
    }
    *values.last().unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, WeightVector) {
    let n = rng.random_range(1..=12);
    // Small integer support so ties occur often.
    let residuals: Vec<f64> = (0..n).map(|_| rng.random_range(-4..=4) as f64 * 0.5).collect();
    let masses: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    (residuals, WeightVector::from_unnormalized(masses).unwrap())
}

#[test]
fn weighted_quantile_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let (r, w) = random_instance(&mut rng);
        let beta: f64 = rng.random_range(0.0..1.0);
        let got = weighted_quantile(&r, &w, beta).unwrap();
        assert_eq!(
            got,
            brute_force_quantile(&r, &w.weights, beta),
            "r={r:?} w={:?} β={beta}",
            w.weights
        );
    }
}

#[test]
fn cdf_mass_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let (r, w) = random_instance(&mut rng);
        let cdf = WeightedCdf::new(&r, &w.weights).unwrap();
        for (atom, cum) in cdf.atoms().iter().zip(cdf.cumulative()) {
            let direct: f64 = r
                .iter()
                .zip(&w.weights)
                .filter(|(x, _)| *x <= atom)
                .map(|(_, w)| w)
                .sum();
            assert!((cum - direct).abs() < 1e-12);
        }
    }
}

#[test]
fn spectral_radius_matches_dense_eigenvalues() {
    for (size, target, seed) in [(256, 1.1, 3), (128, 0.9, 4), (64, 1.5, 5)] {
        let cfg = ReservoirConfig {
            size,
            spectral_radius: target,
            seed,
            ..Default::default()
        };
        let res = build_reservoir(&cfg, 1).unwrap();
        let dense = res.recurrent().to_dense();
        let m = DMatrix::from_fn(size, size, |i, j| dense[i][j]);
        let rho = m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(
            (rho - target).abs() < 1e-6,
            "size {size}: dense radius {rho} vs {target}"
        );
        let estimate = estimate_spectral_radius(res.recurrent());
        assert!((estimate - rho).abs() < 1e-6);
    }
}

#[test]
fn echo_state_property_forgets_initial_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let normal = rand_distr::StandardNormal;
    let inputs: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.sample(normal)]).collect();
    let res = build_reservoir(&ReservoirConfig::default(), 1).unwrap();
    let h0: Vec<f64> = (0..512).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h1: Vec<f64> = (0..512).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = encode(&res, &inputs, &h0).unwrap();
    let b = encode(&res, &inputs, &h1).unwrap();
    let d: f64 = a
        .last()
        .unwrap()
        .iter()
        .zip(b.last().unwrap())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    assert!(d.sqrt() < 1e-6);
}

#[test]
fn softmax_closed_form() {
    let w = softmax_weights(&[0.0, 3f64.ln()], 1.0).unwrap();
    assert!((w.weights[0] - 0.25).abs() < 1e-15);
    assert!((w.weights[1] - 0.75).abs() < 1e-15);
    let one_hot = softmax_weights(&[0.0, 100.0], 0.01).unwrap();
    assert!((one_hot.ess - 1.0).abs() < 1e-12);
}

#[test]
fn scp_quantiles_match_sorted_ranks() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let n = rng.random_range(1..60);
        let alpha = rng.random_range(0.05..0.5);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut sorted = r.clone();
        sorted.sort_by(f64::total_cmp);
        let pi = scp_interval(&r, 0.0, alpha).unwrap();
        let (lo, hi) = rescp::baselines::scp_ranks(n, alpha);
        assert_eq!(pi.lower, sorted[lo - 1]);
        assert_eq!(pi.upper, sorted[hi - 1]);
        let lo_ref = (((n + 1) as f64 * alpha / 2.0) + 1e-9).floor().max(1.0) as usize;
        let hi_ref = (((n + 1) as f64 * (1.0 - alpha / 2.0)) - 1e-9).ceil().min(n as f64) as usize;
        assert_eq!((lo, hi), (lo_ref, hi_ref));
    }
}

#[test]
fn pinball_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let levels = vec![0.1, 0.5, 0.9];
    let dim = 3;
    let states: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let residuals: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..2.0)).collect();
    let refs: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
    let mut m = LinearQuantileModel::zeros(levels, dim).unwrap();
    for w in m.weights.iter_mut().flatten() {
        *w = rng.random_range(-0.5..0.5);
    }
    for b in &mut m.biases {
        *b = rng.random_range(-0.5..0.5);
    }
    let (_, gw, gb) = m.loss_and_gradient(&refs, &residuals);
    let eps = 1e-7;
    for k in 0..m.levels.len() {
        let mut plus = m.clone();
        let mut minus = m.clone();
        plus.biases[k] += eps;
        minus.biases[k] -= eps;
        let fd = (plus.loss(&refs, &residuals) - minus.loss(&refs, &residuals)) / (2.0 * eps);
        assert!(
            (fd - gb[k]).abs() <= 1e-4 * gb[k].abs().max(1e-3),
            "bias {k}: {fd} vs {}",
            gb[k]
        );
        for (d, &g) in gw[k].iter().enumerate() {
            let mut plus = m.clone();
            let mut minus = m.clone();
            plus.weights[k][d] += eps;
            minus.weights[k][d] -= eps;
            let fd = (plus.loss(&refs, &residuals) - minus.loss(&refs, &residuals)) / (2.0 * eps);
            assert!((fd - g).abs() <= 1e-4 * g.abs().max(1e-3));
        }
    }
}

proptest! {
    #[test]
    fn quantile_is_monotone_in_beta(
        r in prop::collection::vec(-10.0f64..10.0, 1..20),
        b1 in 0.0f64..1.0,
        b2 in 0.0f64..1.0,
    ) {
        let w = WeightVector::uniform(r.len()).unwrap();
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        prop_assert!(weighted_quantile(&r, &w, lo).unwrap() <= weighted_quantile(&r, &w, hi).unwrap());
    }

    #[test]
    fn interval_offsets_are_translation_invariant(
        r in prop::collection::vec(-5.0f64..5.0, 2..30),
        c in -100.0f64..100.0,
    ) {
        let a = scp_interval(&r, 0.0, 0.1).unwrap();
        let b = scp_interval(&r, c, 0.1).unwrap();
        prop_assert!((b.lower_offset() - a.lower_offset()).abs() < 1e-9);
        prop_assert!((b.upper_offset() - a.upper_offset()).abs() < 1e-9);
    }
}
