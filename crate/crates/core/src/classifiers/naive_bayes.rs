//! Gaussian naive Bayes: per-class, per-component univariate normals.

use serde::{Deserialize, Serialize};

use super::{sigmoid, TrainingMatrix};
use crate::error::Result;

const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    /// Per class, per component (mean, variance).
    pub components: [Vec<(f64, f64)>; 2],
    pub log_priors: [f64; 2],
}

impl NaiveBayesModel {
    pub fn n_features(&self) -> usize {
        self.components[0].len()
    }

    fn log_joint(&self, scores: &[f64], class: usize) -> f64 {
        let mut acc = self.log_priors[class];
        for (x, &(m, v)) in scores.iter().zip(&self.components[class]) {
            let d = x - m;
            acc += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - d * d / (2.0 * v);
        }
        acc
    }

    pub fn probability(&self, scores: &[f64]) -> f64 {
        sigmoid(self.log_joint(scores, 1) - self.log_joint(scores, 0))
    }
}

pub fn fit(data: &TrainingMatrix) -> Result<NaiveBayesModel> {
    let n = data.n();
    let k = data.k();
    let mut components = [vec![(0.0, 0.0); k], vec![(0.0, 0.0); k]];
    let mut counts = [0usize; 2];

    for i in 0..n {
        let c = data.label(i) as usize;
        counts[c] += 1;
        for (slot, x) in components[c].iter_mut().zip(data.row(i)) {
            slot.0 += x;
        }
    }
    for c in 0..2 {
        for slot in components[c].iter_mut() {
            slot.0 /= counts[c] as f64;
        }
    }
    for i in 0..n {
        let c = data.label(i) as usize;
        for (slot, x) in components[c].iter_mut().zip(data.row(i)) {
            let d = x - slot.0;
            slot.1 += d * d;
        }
    }
    for c in 0..2 {
        for slot in components[c].iter_mut() {
            slot.1 = (slot.1 / counts[c] as f64).max(VARIANCE_FLOOR);
        }
    }

    Ok(NaiveBayesModel {
        components,
        log_priors: [
            (counts[0] as f64 / n as f64).ln(),
            (counts[1] as f64 / n as f64).ln(),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn variance_floor_holds_for_constant_features() {
        let rows = vec![
            vec![1.0, 0.3],
            vec![1.0, 0.1],
            vec![1.0, 5.0],
            vec![1.0, 4.8],
        ];
        let data = TrainingMatrix::new(rows, vec![0, 0, 1, 1]).unwrap();
        let model = fit(&data).unwrap();
        for c in 0..2 {
            assert!(model.components[c][0].1 >= VARIANCE_FLOOR);
        }
        assert!(model.probability(&[1.0, 4.9]).is_finite());
    }

    #[test]
    fn matches_analytic_bayes_rule_within_two_points() {
        // Data truly generated from independent per-class Gaussians, so the
        // naive Bayes fit approaches the analytically optimal rule. Compare
        // test errors at n = 5000.
        let params: [[(f64, f64); 3]; 2] = [
            [(0.0, 1.0), (1.0, 2.0), (-0.5, 0.5)],
            [(1.0, 1.5), (0.0, 1.0), (0.5, 0.8)],
        ];
        let mut rng = crate::seed::rng(44, &[1]);
        let draw = |class: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            params[class]
                .iter()
                .map(|&(m, v)| Normal::new(m, v.sqrt()).unwrap().sample(rng))
                .collect()
        };
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..5000 {
            let c = i % 2;
            rows.push(draw(c, &mut rng));
            labels.push(c as u8);
        }
        let data = TrainingMatrix::new(rows, labels).unwrap();
        let model = fit(&data).unwrap();

        // Oracle: the same factorized form with the true parameters.
        let oracle = NaiveBayesModel {
            components: [params[0].to_vec(), params[1].to_vec()],
            log_priors: [0.5f64.ln(), 0.5f64.ln()],
        };

        let n_test = 20_000;
        let mut err_fit = 0usize;
        let mut err_opt = 0usize;
        for i in 0..n_test {
            let c = (i % 2) as u8;
            let x = draw(c as usize, &mut rng);
            if u8::from(model.probability(&x) > 0.5) != c {
                err_fit += 1;
            }
            if u8::from(oracle.probability(&x) > 0.5) != c {
                err_opt += 1;
            }
        }
        let gap = (err_fit as f64 - err_opt as f64) / n_test as f64;
        assert!(gap.abs() < 0.02, "fitted vs optimal error gap {gap}");
    }
}
