//! Gradient boosting with logistic loss and 5-fold cross-validated tuning.
//!
//! Each stage fits a depth-limited regression tree to the gradient
//! `y - p` with Newton leaf values `sum(g)/sum(p(1-p))`. The grid over
//! (n_trees, depth, shrinkage, min_node) is scored by cross-validated
//! log-loss; tree counts are evaluated as prefixes of one staged fit.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::tree::{grow_regression, Tree};
use super::{sigmoid, TrainingMatrix};
use crate::error::Result;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmTuning {
    pub n_trees_grid: Vec<usize>,
    pub depth_grid: Vec<usize>,
    pub shrinkage_grid: Vec<f64>,
    pub min_node_grid: Vec<usize>,
    pub folds: usize,
}

impl Default for GbmTuning {
    fn default() -> Self {
        GbmTuning {
            n_trees_grid: vec![50, 100, 150],
            depth_grid: vec![1, 2, 3],
            shrinkage_grid: vec![0.1, 0.05],
            min_node_grid: vec![5, 10],
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub n_trees: usize,
    pub depth: usize,
    pub shrinkage: f64,
    pub min_node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub params: GbmParams,
    pub n_features: usize,
}

impl GbmModel {
    pub fn probability(&self, scores: &[f64]) -> f64 {
        sigmoid(self.staged_score(scores, self.trees.len()))
    }

    /// Raw additive score after the first `n_stages` trees.
    pub fn staged_score(&self, scores: &[f64], n_stages: usize) -> f64 {
        let mut f = self.base_score;
        for tree in self.trees.iter().take(n_stages) {
            f += self.params.shrinkage * tree.predict(scores);
        }
        f
    }
}

fn base_score(labels: &[u8]) -> f64 {
    let p = labels.iter().map(|&l| l as f64).sum::<f64>() / labels.len() as f64;
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

/// Boost `n_trees` stages on the given rows of `data`.
fn boost(
    data: &TrainingMatrix,
    rows: &[usize],
    n_trees: usize,
    depth: usize,
    shrinkage: f64,
    min_node: usize,
) -> (f64, Vec<Tree>) {
    let sub_rows: Vec<Vec<f64>> = rows.iter().map(|&i| data.row(i).to_vec()).collect();
    let sub_labels: Vec<u8> = rows.iter().map(|&i| data.label(i)).collect();
    // The subset can be single-class when boosting a CV fold; the base
    // score alone then carries the fit.
    let single_class = !sub_labels.contains(&0) || !sub_labels.contains(&1);
    let f0 = base_score(&sub_labels);
    if single_class {
        return (f0, Vec::new());
    }
    let sub = TrainingMatrix::new(sub_rows, sub_labels).unwrap();

    let n = sub.n();
    let mut f = vec![f0; n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        for i in 0..n {
            let p = sigmoid(f[i]);
            g[i] = sub.label(i) as f64 - p;
            h[i] = (p * (1.0 - p)).max(1e-10);
        }
        let tree = grow_regression(&sub, &g, &h, depth, min_node);
        for i in 0..n {
            f[i] += shrinkage * tree.predict(sub.row(i));
        }
        trees.push(tree);
    }
    (f0, trees)
}

fn log_loss(p: f64, y: u8) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn fit(data: &TrainingMatrix, tuning: &GbmTuning, seed_val: u64) -> Result<GbmModel> {
    let n = data.n();
    let folds = tuning.folds.max(2).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed_val, &[3]);
    order.shuffle(&mut rng);

    let max_trees = tuning.n_trees_grid.iter().copied().max().unwrap_or(150);
    // Cumulative CV log-loss, keyed by (depth, shrinkage, min_node) combo
    // index and n_trees index.
    let n_combos = tuning.depth_grid.len() * tuning.shrinkage_grid.len() * tuning.min_node_grid.len();
    let mut cv_loss = vec![vec![0.0f64; tuning.n_trees_grid.len()]; n_combos];

    for fold in 0..folds {
        let val: Vec<usize> = order
            .iter()
            .copied()
            .skip(fold)
            .step_by(folds)
            .collect();
        let train: Vec<usize> = order
            .iter()
            .copied()
            .enumerate()
            .filter(|(pos, _)| pos % folds != fold)
            .map(|(_, i)| i)
            .collect();

        let mut combo = 0usize;
        for &depth in &tuning.depth_grid {
            for &shrinkage in &tuning.shrinkage_grid {
                for &min_node in &tuning.min_node_grid {
                    let (f0, trees) = boost(data, &train, max_trees, depth, shrinkage, min_node);
                    // Score every validation row once per stage budget.
                    for &i in &val {
                        let x = data.row(i);
                        let mut fval = f0;
                        let mut stage = 0usize;
                        for (ti, &target) in tuning.n_trees_grid.iter().enumerate() {
                            while stage < target.min(trees.len()) {
                                fval += shrinkage * trees[stage].predict(x);
                                stage += 1;
                            }
                            cv_loss[combo][ti] += log_loss(sigmoid(fval), data.label(i));
                        }
                    }
                    combo += 1;
                }
            }
        }
    }

    // Grid order defines the deterministic tie-break.
    let mut best: Option<(f64, GbmParams)> = None;
    let mut combo = 0usize;
    for &depth in &tuning.depth_grid {
        for &shrinkage in &tuning.shrinkage_grid {
            for &min_node in &tuning.min_node_grid {
                for (ti, &n_trees) in tuning.n_trees_grid.iter().enumerate() {
                    let loss = cv_loss[combo][ti];
                    if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                        best = Some((
                            loss,
                            GbmParams {
                                n_trees,
                                depth,
                                shrinkage,
                                min_node,
                            },
                        ));
                    }
                }
                combo += 1;
            }
        }
    }
    let params = best.unwrap().1;

    let all_rows: Vec<usize> = (0..n).collect();
    let (f0, trees) = boost(
        data,
        &all_rows,
        params.n_trees,
        params.depth,
        params.shrinkage,
        params.min_node,
    );
    Ok(GbmModel {
        base_score: f0,
        trees,
        params,
        n_features: data.k(),
    })
}
