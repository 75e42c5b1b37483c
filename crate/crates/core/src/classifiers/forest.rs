//! Random forest with out-of-bag stepwise mtry tuning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{ClassificationTreeBuilder, Tree};
use super::TrainingMatrix;
use crate::error::Result;
use crate::seed;

/// Forest settings. The stepwise search starts at `floor(sqrt(K))` and walks
/// the mtry ladder by factor 1.5 while the out-of-bag error improves by more
/// than `improvement` (relative). Candidate forests use `search_trees` trees;
/// the final model uses `n_trees`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfTuning {
    pub n_trees: usize,
    pub search_trees: usize,
    pub improvement: f64,
}

impl Default for RfTuning {
    fn default() -> Self {
        RfTuning {
            n_trees: 500,
            search_trees: 100,
            improvement: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub mtry: usize,
    pub n_features: usize,
}

impl ForestModel {
    /// Fraction of trees voting class 1.
    pub fn probability(&self, scores: &[f64]) -> f64 {
        let votes: usize = self
            .trees
            .iter()
            .map(|t| (t.predict(scores) > 0.5) as usize)
            .sum();
        votes as f64 / self.trees.len() as f64
    }

    /// Vote fractions for many rows at once, iterating tree-major so each
    /// tree's nodes stay cache-resident across the whole batch.
    pub fn probability_batch(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let mut votes = vec![0u32; rows.len()];
        for tree in &self.trees {
            for (v, row) in votes.iter_mut().zip(rows) {
                *v += (tree.predict(row) > 0.5) as u32;
            }
        }
        votes
            .into_iter()
            .map(|v| v as f64 / self.trees.len() as f64)
            .collect()
    }
}

struct GrownForest {
    trees: Vec<Tree>,
    inbag: Vec<Vec<bool>>,
}

fn grow_forest(data: &TrainingMatrix, n_trees: usize, mtry: usize, seed_val: u64) -> GrownForest {
    let n = data.n();
    let mut trees = Vec::with_capacity(n_trees);
    let mut inbag = Vec::with_capacity(n_trees);
    let mut builder = ClassificationTreeBuilder::new(data);
    let mut samples: Vec<u32> = vec![0; n];
    for t in 0..n_trees {
        let mut rng = seed::rng(seed_val, &[t as u64]);
        let mut flags = vec![false; n];
        for s in samples.iter_mut() {
            let i = rng.random_range(0..n);
            flags[i] = true;
            *s = i as u32;
        }
        trees.push(builder.grow(&samples, mtry, &mut rng));
        inbag.push(flags);
    }
    GrownForest { trees, inbag }
}

/// Misclassification rate over rows predicted only by trees that did not
/// sample them. Rows in every bag are skipped.
fn oob_error(data: &TrainingMatrix, forest: &GrownForest) -> f64 {
    let n = data.n();
    let mut errors = 0usize;
    let mut counted = 0usize;
    for i in 0..n {
        let mut votes1 = 0usize;
        let mut total = 0usize;
        for (tree, flags) in forest.trees.iter().zip(&forest.inbag) {
            if !flags[i] {
                total += 1;
                votes1 += (tree.predict(data.row(i)) > 0.5) as usize;
            }
        }
        if total == 0 {
            continue;
        }
        counted += 1;
        let label = u8::from(2 * votes1 > total);
        if label != data.label(i) {
            errors += 1;
        }
    }
    if counted == 0 {
        0.5
    } else {
        errors as f64 / counted as f64
    }
}

fn step_up(m: usize, k: usize) -> usize {
    ((m as f64 * 1.5).round() as usize).max(m + 1).min(k)
}

fn step_down(m: usize) -> usize {
    ((m as f64 / 1.5).round() as usize).min(m.saturating_sub(1)).max(1)
}

/// Stepwise out-of-bag search for mtry.
fn tune_mtry(data: &TrainingMatrix, tuning: &RfTuning, seed_val: u64) -> usize {
    let k = data.k();
    if k == 1 {
        return 1;
    }
    let start = ((k as f64).sqrt().floor() as usize).clamp(1, k);
    // One shared seed: candidate forests reuse the same bootstrap draws, so
    // the comparison is paired.
    let eval = |m: usize| oob_error(data, &grow_forest(data, tuning.search_trees, m, seed_val));

    let start_err = eval(start);
    let mut best = (start, start_err);

    let mut m = start;
    let mut err = start_err;
    while m < k {
        let next = step_up(m, k);
        if next == m {
            break;
        }
        let next_err = eval(next);
        if err - next_err > tuning.improvement * err.max(1e-12) {
            m = next;
            err = next_err;
            if err < best.1 {
                best = (m, err);
            }
        } else {
            break;
        }
    }
    m = start;
    err = start_err;
    while m > 1 {
        let next = step_down(m);
        if next == m {
            break;
        }
        let next_err = eval(next);
        if err - next_err > tuning.improvement * err.max(1e-12) {
            m = next;
            err = next_err;
            if err < best.1 {
                best = (m, err);
            }
        } else {
            break;
        }
    }
    best.0
}

pub fn fit(data: &TrainingMatrix, tuning: &RfTuning, seed_val: u64) -> Result<ForestModel> {
    let mtry = tune_mtry(data, tuning, seed::derive(seed_val, &[1]));
    let forest = grow_forest(data, tuning.n_trees, mtry, seed::derive(seed_val, &[2]));
    Ok(ForestModel {
        trees: forest.trees,
        mtry,
        n_features: data.k(),
    })
}
