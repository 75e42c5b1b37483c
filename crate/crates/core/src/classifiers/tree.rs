//! Decision trees: Gini classification trees for the forest and
//! squared-error regression trees for boosting.
//!
//! Split thresholds are midpoints between adjacent distinct values, so they
//! scale exactly with the data. The classification builder presorts each
//! feature once per tree and keeps the sorted index lists partitioned across
//! splits, so nodes never sort.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainingMatrix;

/// Sentinel feature id marking a leaf; the leaf value lives in `threshold`.
const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Node {
            feature: LEAF,
            threshold: value,
            left: 0,
            right: 0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    #[inline]
    pub fn predict(&self, scores: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            let node = self.nodes[idx];
            if node.feature == LEAF {
                return node.threshold;
            }
            idx = if scores[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }
}

/// Reusable state for growing Gini classification trees over bootstrap
/// samples of one training matrix.
///
/// The full training matrix is presorted per feature once; each tree's
/// sorted sample lists then come from a counting pass over that order
/// instead of a fresh sort.
pub struct ClassificationTreeBuilder<'a> {
    data: &'a TrainingMatrix,
    k: usize,
    /// Per-feature sort order of the full training matrix.
    full_order: Vec<u32>,
    /// Occurrence counts of each training row in the current sample.
    bag_count: Vec<u32>,
    /// Local sample indices grouped by training row (offsets + flat list).
    local_offsets: Vec<u32>,
    locals: Vec<u32>,
    /// Feature-major values of the current sample: `values[f * m + j]`.
    values: Vec<f64>,
    labels: Vec<u8>,
    /// Per-feature index lists sorted by value, partitioned in place as the
    /// tree splits: `orders[f * m + j]`.
    orders: Vec<u32>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    feature_pool: Vec<usize>,
    stack: Vec<(usize, usize, usize)>,
    /// recip[i] = 1/i, so the split scan stays division-free.
    recip: Vec<f64>,
}

impl<'a> ClassificationTreeBuilder<'a> {
    pub fn new(data: &'a TrainingMatrix) -> Self {
        let n = data.n();
        let k = data.k();
        let mut full_order = vec![0u32; k * n];
        for f in 0..k {
            let order = &mut full_order[f * n..(f + 1) * n];
            for (j, o) in order.iter_mut().enumerate() {
                *o = j as u32;
            }
            order.sort_unstable_by(|&a, &b| {
                data.row(a as usize)[f].total_cmp(&data.row(b as usize)[f])
            });
        }
        ClassificationTreeBuilder {
            data,
            k,
            full_order,
            bag_count: vec![0; n],
            local_offsets: vec![0; n + 1],
            locals: Vec::new(),
            values: Vec::new(),
            labels: Vec::new(),
            orders: Vec::new(),
            scratch: Vec::new(),
            goes_left: Vec::new(),
            feature_pool: (0..k).collect(),
            stack: Vec::new(),
            recip: (0..=n).map(|i| if i == 0 { 0.0 } else { 1.0 / i as f64 }).collect(),
        }
    }

    /// Grow one tree on the rows listed in `samples` (indices into the
    /// training matrix, repeats allowed). `mtry` features are drawn without
    /// replacement at every node. Leaves hold the majority label (ties
    /// resolve to 0); growth continues until nodes are pure or unsplittable.
    pub fn grow(&mut self, samples: &[u32], mtry: usize, rng: &mut ChaCha8Rng) -> Tree {
        let m = samples.len();
        let n = self.data.n();
        let k = self.k;
        let mtry = mtry.clamp(1, k);

        self.values.clear();
        self.values.resize(k * m, 0.0);
        self.labels.clear();
        self.labels.reserve(m);
        for (j, &s) in samples.iter().enumerate() {
            let row = self.data.row(s as usize);
            for f in 0..k {
                self.values[f * m + j] = row[f];
            }
            self.labels.push(self.data.label(s as usize));
        }

        // Group local sample indices by training row (counting sort), then
        // derive each feature's sorted local order from the full-data order.
        self.bag_count.iter_mut().for_each(|c| *c = 0);
        for &s in samples {
            self.bag_count[s as usize] += 1;
        }
        self.local_offsets[0] = 0;
        for g in 0..n {
            self.local_offsets[g + 1] = self.local_offsets[g] + self.bag_count[g];
        }
        self.locals.clear();
        self.locals.resize(m, 0);
        let mut cursor: Vec<u32> = self.local_offsets[..n].to_vec();
        for (j, &s) in samples.iter().enumerate() {
            let slot = cursor[s as usize];
            self.locals[slot as usize] = j as u32;
            cursor[s as usize] += 1;
        }
        self.orders.clear();
        self.orders.reserve(k * m);
        for f in 0..k {
            for &g in &self.full_order[f * n..(f + 1) * n] {
                let (lo, hi) = (
                    self.local_offsets[g as usize] as usize,
                    self.local_offsets[g as usize + 1] as usize,
                );
                self.orders.extend_from_slice(&self.locals[lo..hi]);
            }
        }
        debug_assert_eq!(self.orders.len(), k * m);
        self.scratch.resize(m, 0);
        self.goes_left.resize(m, false);
        while self.recip.len() <= m {
            self.recip.push(1.0 / (self.recip.len() as f64));
        }

        let mut nodes = vec![Node::leaf(0.0)];
        self.stack.clear();
        self.stack.push((0, 0, m));

        while let Some((node_idx, lo, hi)) = self.stack.pop() {
            let n = hi - lo;
            let members = &self.orders[lo..hi];
            let n1: usize = members.iter().map(|&j| self.labels[j as usize] as usize).sum();
            let majority = u8::from(2 * n1 > n);
            if n1 == 0 || n1 == n || n < 2 {
                nodes[node_idx] = Node::leaf(majority as f64);
                continue;
            }

            for i in 0..mtry {
                let j = rng.random_range(i..k);
                self.feature_pool.swap(i, j);
            }

            // Minimizing the weighted Gini impurity is equivalent to
            // maximizing l1^2/l_n + r1^2/r_n over split positions, which
            // avoids per-boundary divisions via the reciprocal table. The
            // tiny offset reproduces the positive-gain requirement.
            let mut best_score = (n1 * n1) as f64 * self.recip[n] + n as f64 * 5e-13;
            let mut best: Option<(usize, f64)> = None;
            for fi in 0..mtry {
                let f = self.feature_pool[fi];
                let order = &self.orders[f * m + lo..f * m + hi];
                let vals = &self.values[f * m..(f + 1) * m];
                let mut left_n1 = 0usize;
                let mut prev = vals[order[0] as usize];
                for (split_at, &j) in order.iter().enumerate() {
                    let v = vals[j as usize];
                    if split_at > 0 && v != prev {
                        let right_n1 = n1 - left_n1;
                        let score = (left_n1 * left_n1) as f64 * self.recip[split_at]
                            + (right_n1 * right_n1) as f64 * self.recip[n - split_at];
                        if score > best_score {
                            best_score = score;
                            best = Some((f, 0.5 * (prev + v)));
                        }
                    }
                    left_n1 += self.labels[j as usize] as usize;
                    prev = v;
                }
            }

            match best {
                None => nodes[node_idx] = Node::leaf(majority as f64),
                Some((feature, threshold)) => {
                    let vals = &self.values[feature * m..(feature + 1) * m];
                    let mut n_left = 0usize;
                    for &j in &self.orders[lo..hi] {
                        let left = vals[j as usize] <= threshold;
                        self.goes_left[j as usize] = left;
                        n_left += left as usize;
                    }
                    // Stable partition of every feature's order list so the
                    // children stay value-sorted.
                    for f in 0..k {
                        let order = &mut self.orders[f * m + lo..f * m + hi];
                        let mut a = 0usize;
                        let mut b = n_left;
                        for &j in order.iter() {
                            if self.goes_left[j as usize] {
                                self.scratch[a] = j;
                                a += 1;
                            } else {
                                self.scratch[b] = j;
                                b += 1;
                            }
                        }
                        order.copy_from_slice(&self.scratch[..n]);
                    }
                    let mid = lo + n_left;
                    let left = nodes.len();
                    nodes.push(Node::leaf(0.0));
                    let right = nodes.len();
                    nodes.push(Node::leaf(0.0));
                    nodes[node_idx] = Node {
                        feature: feature as u32,
                        threshold,
                        left: left as u32,
                        right: right as u32,
                    };
                    self.stack.push((left, lo, mid));
                    self.stack.push((right, mid, hi));
                }
            }
        }
        Tree { nodes }
    }
}

/// Convenience wrapper growing a single tree with a fresh builder.
#[cfg(test)]
pub fn grow_classification(
    data: &TrainingMatrix,
    samples: &[u32],
    mtry: usize,
    rng: &mut ChaCha8Rng,
) -> Tree {
    ClassificationTreeBuilder::new(data).grow(samples, mtry, rng)
}

/// Grow a depth-limited regression tree on gradients, with Newton leaf
/// values `sum(g) / sum(h)`. Splits minimize squared error on `g`; both
/// children must hold at least `min_node` rows.
pub fn grow_regression(
    features: &TrainingMatrix,
    g: &[f64],
    h: &[f64],
    max_depth: usize,
    min_node: usize,
) -> Tree {
    let k = features.k();
    let mut nodes = Vec::new();
    let mut order: Vec<u32> = (0..features.n() as u32).collect();
    nodes.push(Node::leaf(0.0));
    let mut stack = vec![(0usize, 0usize, order.len(), 0usize)];
    let mut scratch: Vec<(f64, f64)> = Vec::new();

    while let Some((node_idx, lo, hi, depth)) = stack.pop() {
        let rows = &order[lo..hi];
        let n = rows.len();
        let g_sum: f64 = rows.iter().map(|&i| g[i as usize]).sum();
        let h_sum: f64 = rows.iter().map(|&i| h[i as usize]).sum();

        let leaf_value = if h_sum > 1e-10 { g_sum / h_sum } else { 0.0 };
        if depth >= max_depth || n < 2 * min_node {
            nodes[node_idx] = Node::leaf(leaf_value);
            continue;
        }

        // Best split maximizes sum_l^2/n_l + sum_r^2/n_r (equivalently
        // minimizes squared error of the fitted means).
        let baseline = g_sum * g_sum / n as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..k {
            scratch.clear();
            scratch.extend(rows.iter().map(|&i| (features.row(i as usize)[f], g[i as usize])));
            scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for split_at in 1..n {
                left_sum += scratch[split_at - 1].1;
                if scratch[split_at].0 == scratch[split_at - 1].0 {
                    continue;
                }
                let left_n = split_at;
                let right_n = n - split_at;
                if left_n < min_node || right_n < min_node {
                    continue;
                }
                let right_sum = g_sum - left_sum;
                let score = left_sum * left_sum / left_n as f64
                    + right_sum * right_sum / right_n as f64
                    - baseline;
                if score > best.map_or(1e-12, |b| b.2) {
                    let threshold = 0.5 * (scratch[split_at - 1].0 + scratch[split_at].0);
                    best = Some((f, threshold, score));
                }
            }
        }

        match best {
            None => nodes[node_idx] = Node::leaf(leaf_value),
            Some((feature, threshold, _)) => {
                let mut buf: Vec<u32> = Vec::with_capacity(hi - lo);
                let mut n_left = 0usize;
                for &i in &order[lo..hi] {
                    if features.row(i as usize)[feature] <= threshold {
                        buf.push(i);
                        n_left += 1;
                    }
                }
                for &i in &order[lo..hi] {
                    if features.row(i as usize)[feature] > threshold {
                        buf.push(i);
                    }
                }
                order[lo..hi].copy_from_slice(&buf);
                let mid = lo + n_left;
                let left = nodes.len();
                nodes.push(Node::leaf(0.0));
                let right = nodes.len();
                nodes.push(Node::leaf(0.0));
                nodes[node_idx] = Node {
                    feature: feature as u32,
                    threshold,
                    left: left as u32,
                    right: right as u32,
                };
                stack.push((left, lo, mid, depth + 1));
                stack.push((right, mid, hi, depth + 1));
            }
        }
    }
    Tree { nodes }
}
