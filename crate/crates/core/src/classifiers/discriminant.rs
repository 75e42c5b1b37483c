//! Linear and quadratic discriminant analysis.
//!
//! Class-1 probabilities come from a softmax over the two discriminant
//! scores. Covariance estimates whose smallest eigenvalue falls below 1e-10
//! get a ridge of `1e-6 tr(Sigma)/K` on the diagonal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sigmoid, TrainingMatrix};
use crate::error::{Error, Result};

const EIGEN_FLOOR: f64 = 1e-10;
const RIDGE_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub means: [Vec<f64>; 2],
    /// Inverse of the pooled covariance, row-major K x K.
    pub pooled_inv: Vec<f64>,
    pub log_priors: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdaModel {
    pub means: [Vec<f64>; 2],
    /// Per-class inverse covariance, row-major K x K.
    pub inv: [Vec<f64>; 2],
    pub log_det: [f64; 2],
    pub log_priors: [f64; 2],
}

impl LdaModel {
    pub fn n_features(&self) -> usize {
        self.means[0].len()
    }

    /// delta_j = x^T S^{-1} mu_j - mu_j^T S^{-1} mu_j / 2 + log pi_j.
    pub fn discriminant(&self, scores: &[f64], class: usize) -> f64 {
        let k = self.n_features();
        let mu = &self.means[class];
        let mut x_s_mu = 0.0;
        let mut mu_s_mu = 0.0;
        for a in 0..k {
            let mut s_mu_a = 0.0;
            for b in 0..k {
                s_mu_a += self.pooled_inv[a * k + b] * mu[b];
            }
            x_s_mu += scores[a] * s_mu_a;
            mu_s_mu += mu[a] * s_mu_a;
        }
        x_s_mu - 0.5 * mu_s_mu + self.log_priors[class]
    }

    pub fn probability(&self, scores: &[f64]) -> f64 {
        sigmoid(self.discriminant(scores, 1) - self.discriminant(scores, 0))
    }
}

impl QdaModel {
    pub fn n_features(&self) -> usize {
        self.means[0].len()
    }

    /// delta_j = -log|S_j|/2 - (x - mu_j)^T S_j^{-1} (x - mu_j)/2 + log pi_j.
    pub fn discriminant(&self, scores: &[f64], class: usize) -> f64 {
        let k = self.n_features();
        let mu = &self.means[class];
        let inv = &self.inv[class];
        let mut quad = 0.0;
        for a in 0..k {
            let da = scores[a] - mu[a];
            for b in 0..k {
                quad += da * inv[a * k + b] * (scores[b] - mu[b]);
            }
        }
        -0.5 * self.log_det[class] - 0.5 * quad + self.log_priors[class]
    }

    pub fn probability(&self, scores: &[f64]) -> f64 {
        sigmoid(self.discriminant(scores, 1) - self.discriminant(scores, 0))
    }
}

fn class_means(data: &TrainingMatrix) -> ([Vec<f64>; 2], [usize; 2]) {
    let k = data.k();
    let mut means = [vec![0.0; k], vec![0.0; k]];
    let mut counts = [0usize; 2];
    for i in 0..data.n() {
        let c = data.label(i) as usize;
        counts[c] += 1;
        for (m, x) in means[c].iter_mut().zip(data.row(i)) {
            *m += x;
        }
    }
    for c in 0..2 {
        for m in means[c].iter_mut() {
            *m /= counts[c] as f64;
        }
    }
    (means, counts)
}

/// Ridge-stabilized inverse and log-determinant of a covariance matrix.
fn invert_covariance(mut sigma: DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let k = sigma.nrows();
    let min_eig = sigma
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if min_eig < EIGEN_FLOOR {
        let ridge = RIDGE_SCALE * sigma.trace() / k as f64;
        let ridge = if ridge > 0.0 { ridge } else { RIDGE_SCALE };
        for i in 0..k {
            sigma[(i, i)] += ridge;
        }
    }
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Numerical("covariance not positive definite after ridge".into()))?;
    let log_det = 2.0 * (0..k).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>();
    let inv = chol.inverse();
    Ok((inv.as_slice().to_vec(), log_det))
}

pub fn fit_lda(data: &TrainingMatrix) -> Result<LdaModel> {
    let n = data.n();
    let k = data.k();
    let (means, counts) = class_means(data);

    let mut pooled = DMatrix::zeros(k, k);
    for i in 0..n {
        let c = data.label(i) as usize;
        let d = DVector::from_fn(k, |a, _| data.row(i)[a] - means[c][a]);
        pooled += &d * d.transpose();
    }
    pooled /= (n - 2) as f64;

    let (pooled_inv, _) = invert_covariance(pooled)?;
    Ok(LdaModel {
        means,
        pooled_inv,
        log_priors: [
            (counts[0] as f64 / n as f64).ln(),
            (counts[1] as f64 / n as f64).ln(),
        ],
    })
}

pub fn fit_qda(data: &TrainingMatrix) -> Result<QdaModel> {
    let n = data.n();
    let k = data.k();
    let (means, counts) = class_means(data);

    let mut inv = [Vec::new(), Vec::new()];
    let mut log_det = [0.0; 2];
    for c in 0..2 {
        let mut sigma = DMatrix::zeros(k, k);
        for i in 0..n {
            if data.label(i) as usize != c {
                continue;
            }
            let d = DVector::from_fn(k, |a, _| data.row(i)[a] - means[c][a]);
            sigma += &d * d.transpose();
        }
        let denom = (counts[c].max(2) - 1) as f64;
        sigma /= denom;
        let (i, d) = invert_covariance(sigma)?;
        inv[c] = i;
        log_det[c] = d;
    }
    Ok(QdaModel {
        means,
        inv: [inv[0].clone(), inv[1].clone()],
        log_det,
        log_priors: [
            (counts[0] as f64 / n as f64).ln(),
            (counts[1] as f64 / n as f64).ln(),
        ],
    })
}
