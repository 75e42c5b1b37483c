//! Bayesian logistic calibration of aggregated probabilities.
//!
//! Model: y_i ~ Bernoulli(sigmoid(beta0 + beta1 * p_i)) with independent
//! Cauchy(0, scale) priors on both coefficients. The posterior mode is found
//! by expectation-maximization over the Cauchy's normal scale-mixture
//! representation: the E-step replaces each prior by a normal with inverse
//! variance 2 / (scale^2 + beta^2), the M-step takes one penalized
//! weighted-least-squares step. At a fixed point the exact posterior
//! gradient vanishes, because the normal-mixture penalty gradient equals
//! the Cauchy log-density gradient there.

use serde::{Deserialize, Serialize};

use crate::classifiers::sigmoid;
use crate::error::{Error, Result};

const MAX_ITER: usize = 200;
const TOL: f64 = 1e-8;

pub const DEFAULT_PRIOR_SCALE_INTERCEPT: f64 = 10.0;
pub const DEFAULT_PRIOR_SCALE_SLOPE: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub beta0: f64,
    pub beta1: f64,
    pub prior_scale0: f64,
    pub prior_scale1: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl CalibrationModel {
    /// Calibrated probability for an aggregated probability.
    pub fn calibrate(&self, p_hat: f64) -> f64 {
        sigmoid(self.beta0 + self.beta1 * p_hat)
    }
}

/// Log posterior (likelihood plus Cauchy log-priors, up to constants).
pub fn log_posterior(
    pairs: &[(f64, u8)],
    beta0: f64,
    beta1: f64,
    scale0: f64,
    scale1: f64,
) -> f64 {
    let mut acc = 0.0;
    for &(p, y) in pairs {
        let eta = beta0 + beta1 * p;
        // log sigma(eta) for y=1, log(1 - sigma(eta)) for y=0.
        let log_p = -softplus(-eta);
        let log_q = -softplus(eta);
        acc += if y == 1 { log_p } else { log_q };
    }
    acc += -(1.0 + (beta0 / scale0).powi(2)).ln();
    acc += -(1.0 + (beta1 / scale1).powi(2)).ln();
    acc
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        (1.0 + x.exp()).ln()
    }
}

/// Posterior-mode fit of the two calibration coefficients.
pub fn fit_calibration(
    pairs: &[(f64, u8)],
    prior_scale0: f64,
    prior_scale1: f64,
) -> Result<CalibrationModel> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "calibration needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    if prior_scale0 <= 0.0 || prior_scale1 <= 0.0 {
        return Err(Error::InvalidConfig("prior scales must be positive".into()));
    }
    let has0 = pairs.iter().any(|&(_, y)| y == 0);
    let has1 = pairs.iter().any(|&(_, y)| y == 1);
    if !has0 || !has1 {
        return Err(Error::DegenerateLabels);
    }
    // Aggregated probabilities arrive clamped, but calibration may also be
    // fed raw values.
    let pairs: Vec<(f64, u8)> = pairs
        .iter()
        .map(|&(p, y)| (p.clamp(1e-12, 1.0 - 1e-12), y))
        .collect();

    let mut beta = [0.0f64; 2];
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        // E-step: expected inverse prior variances given current beta.
        let d = [
            2.0 / (prior_scale0 * prior_scale0 + beta[0] * beta[0]),
            2.0 / (prior_scale1 * prior_scale1 + beta[1] * beta[1]),
        ];
        // M-step: penalized IWLS. The update direction is
        // (X^T W X + D)^{-1} (X^T (y - pi) - D beta), whose numerator is the
        // exact posterior gradient.
        let mut h = [[d[0], 0.0], [0.0, d[1]]];
        let mut g = [-d[0] * beta[0], -d[1] * beta[1]];
        for &(p, y) in &pairs {
            let eta = beta[0] + beta[1] * p;
            let pi = sigmoid(eta);
            let w = (pi * (1.0 - pi)).max(1e-10);
            let r = y as f64 - pi;
            g[0] += r;
            g[1] += r * p;
            h[0][0] += w;
            h[0][1] += w * p;
            h[1][1] += w * p * p;
        }
        h[1][0] = h[0][1];
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let delta = [
            (h[1][1] * g[0] - h[0][1] * g[1]) / det,
            (h[0][0] * g[1] - h[1][0] * g[0]) / det,
        ];
        beta[0] += delta[0];
        beta[1] += delta[1];
        if delta[0].abs().max(delta[1].abs()) < TOL {
            converged = true;
            break;
        }
    }

    Ok(CalibrationModel {
        beta0: beta[0],
        beta1: beta[1],
        prior_scale0,
        prior_scale1,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn simulate_pairs(beta0: f64, beta1: f64, n: usize, seed: u64) -> Vec<(f64, u8)> {
        let mut rng = crate::seed::rng(seed, &[40]);
        (0..n)
            .map(|_| {
                let p: f64 = rng.random_range(0.01..0.99);
                let pi = sigmoid(beta0 + beta1 * p);
                (p, u8::from(rng.random::<f64>() < pi))
            })
            .collect()
    }

    #[test]
    fn recovers_generating_coefficients() {
        let pairs = simulate_pairs(0.0, 4.0, 100_000, 1);
        let model = fit_calibration(&pairs, 10.0, 2.5).unwrap();
        assert!(model.converged);
        assert!(model.beta0.abs() < 0.1, "beta0 = {}", model.beta0);
        assert!((model.beta1 - 4.0).abs() < 0.1, "beta1 = {}", model.beta1);
    }

    #[test]
    fn constant_predictor_shrinks_to_prior_mode() {
        // p = 0.5 for every pair with balanced labels: the likelihood only
        // constrains beta0 + beta1/2, and the prior centers the rest.
        let pairs: Vec<(f64, u8)> = (0..1000).map(|i| (0.5, (i % 2) as u8)).collect();
        let model = fit_calibration(&pairs, 10.0, 2.5).unwrap();
        assert!(model.beta1.abs() < 0.1, "beta1 = {}", model.beta1);
        assert!(model.beta0.abs() < 0.1, "beta0 = {}", model.beta0);
    }

    #[test]
    fn separation_yields_finite_coefficients() {
        // p < 0.5 => y = 0, p > 0.5 => y = 1: perfectly separated.
        let mut pairs = Vec::new();
        for i in 0..50 {
            let p = 0.01 + 0.02 * i as f64;
            pairs.push((p, u8::from(p > 0.5)));
        }
        let model = fit_calibration(&pairs, 10.0, 2.5).unwrap();
        assert!(model.beta0.is_finite() && model.beta1.is_finite());
        assert!(model.beta1.abs() < 40.0, "beta1 = {}", model.beta1);
        assert!(model.beta1 > 0.0);
    }

    #[test]
    fn posterior_gradient_vanishes_at_solution() {
        // Finite-difference gradient of the exact log posterior, step 1e-5.
        for (pairs, name) in [
            (simulate_pairs(-1.0, 3.0, 300, 7), "smooth"),
            (
                (0..40)
                    .map(|i| {
                        let p = 0.02 + 0.024 * i as f64;
                        (p, u8::from(p > 0.5))
                    })
                    .collect::<Vec<_>>(),
                "separated",
            ),
        ] {
            let model = fit_calibration(&pairs, 10.0, 2.5).unwrap();
            let f = |b0: f64, b1: f64| log_posterior(&pairs, b0, b1, 10.0, 2.5);
            let h = 1e-5;
            let g0 = (f(model.beta0 + h, model.beta1) - f(model.beta0 - h, model.beta1)) / (2.0 * h);
            let g1 = (f(model.beta0, model.beta1 + h) - f(model.beta0, model.beta1 - h)) / (2.0 * h);
            assert!(
                g0.abs().max(g1.abs()) < 1e-6,
                "{name}: gradient ({g0}, {g1})"
            );
        }
    }

    #[test]
    fn well_calibrated_input_passes_through_the_midpoint() {
        // Pairs drawn with y ~ Bernoulli(p): identity calibration is right,
        // so the fitted curve maps 0.5 near 0.5.
        let mut rng = crate::seed::rng(3, &[41]);
        let pairs: Vec<(f64, u8)> = (0..10_000)
            .map(|_| {
                let p: f64 = rng.random_range(0.02..0.98);
                (p, u8::from(rng.random::<f64>() < p))
            })
            .collect();
        let model = fit_calibration(&pairs, 10.0, 2.5).unwrap();
        assert!(model.beta1 > 0.0);
        let mid = model.calibrate(0.5);
        assert!((mid - 0.5).abs() < 0.05, "calibrated midpoint {mid}");
    }

    #[test]
    fn monotone_threshold_rule_for_positive_slope() {
        let pairs = simulate_pairs(0.5, 2.0, 5000, 11);
        let model = fit_calibration(&pairs, 10.0, 2.5).unwrap();
        assert!(model.beta1 > 0.0);
        let mut last = 0.0;
        let mut crossings = 0;
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            let label = u8::from(model.calibrate(p) > 0.5) as f64;
            if label != last {
                crossings += 1;
            }
            last = label;
        }
        assert!(crossings <= 1, "label not a threshold rule");
    }

    #[test]
    fn degenerate_labels_are_rejected() {
        let pairs: Vec<(f64, u8)> = (0..10).map(|i| (0.1 * i as f64, 1)).collect();
        assert!(matches!(
            fit_calibration(&pairs, 10.0, 2.5),
            Err(Error::DegenerateLabels)
        ));
    }
}
