//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sigmoid, TrainingMatrix};
use crate::error::Result;

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    /// Set when IRLS did not converge (the usual cause is separated data);
    /// the model holds the last iterate.
    pub separation: bool,
}

impl LogitModel {
    pub fn probability(&self, scores: &[f64]) -> f64 {
        let eta = self.intercept
            + self
                .coefficients
                .iter()
                .zip(scores)
                .map(|(b, x)| b * x)
                .sum::<f64>();
        sigmoid(eta)
    }
}

pub fn fit(data: &TrainingMatrix) -> Result<LogitModel> {
    let n = data.n();
    let k = data.k();
    let p = k + 1;

    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { data.row(i)[j - 1] });
    let y = DVector::from_fn(n, |i, _| data.label(i) as f64);

    let mut beta = DVector::zeros(p);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let eta = &x * &beta;
        let mu = eta.map(sigmoid);
        let w = mu.map(|m| (m * (1.0 - m)).max(1e-10));

        // Solve X^T W X delta = X^T (y - mu); beta += delta.
        let mut xtwx = DMatrix::zeros(p, p);
        let mut grad = DVector::zeros(p);
        for i in 0..n {
            let wi = w[i];
            let r = y[i] - mu[i];
            for a in 0..p {
                grad[a] += x[(i, a)] * r;
                for b in a..p {
                    xtwx[(a, b)] += wi * x[(i, a)] * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let delta = match xtwx.cholesky() {
            Some(chol) => chol.solve(&grad),
            None => break,
        };
        beta += &delta;
        if delta.amax() < TOL {
            converged = true;
            break;
        }
    }

    Ok(LogitModel {
        intercept: beta[0],
        coefficients: beta.as_slice()[1..].to_vec(),
        converged,
        separation: !converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::test_support::gaussian_blobs;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn recovers_known_coefficients() {
        let mut rng = crate::seed::rng(3, &[4]);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let (alpha, beta) = (0.5, [1.5, -2.0]);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..20_000 {
            let x = [normal.sample(&mut rng), normal.sample(&mut rng)];
            let p = sigmoid(alpha + beta[0] * x[0] + beta[1] * x[1]);
            rows.push(x.to_vec());
            labels.push(u8::from(rng.random::<f64>() < p));
        }
        let data = TrainingMatrix::new(rows, labels).unwrap();
        let model = fit(&data).unwrap();
        assert!(model.converged);
        assert!((model.intercept - alpha).abs() < 0.1, "{}", model.intercept);
        assert!((model.coefficients[0] - beta[0]).abs() < 0.1);
        assert!((model.coefficients[1] - beta[1]).abs() < 0.1);
    }

    #[test]
    fn separated_data_is_flagged_with_valid_probabilities() {
        // x < 0 => class 0, x > 0 => class 1, perfectly separated.
        let rows: Vec<Vec<f64>> = (1..=20).map(|i| vec![i as f64 / 10.0 - 1.05]).collect();
        let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] > 0.0)).collect();
        let data = TrainingMatrix::new(rows.clone(), labels).unwrap();
        let model = fit(&data).unwrap();
        assert!(model.separation, "separation not flagged");
        for r in &rows {
            let p = model.probability(r);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn balanced_blobs_give_near_half_intercept_probability() {
        let data = gaussian_blobs(500, 2, 2.0, 8);
        let model = fit(&data).unwrap();
        // Point symmetric between the blobs.
        let p = model.probability(&[0.0, 0.0]);
        assert!((p - 0.5).abs() < 0.08, "p(0) = {p}");
    }
}
