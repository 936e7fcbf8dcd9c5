//! Random-forest classifier for (soft) binary labels.
//!
//! Every training row carries a class-1 weight `w*y` and a class-0 weight
//! `w*(1-y)`; splits minimize weighted Gini impurity. Each tree grows on a
//! bootstrap sample recorded as per-row multiplicities, so presorted feature
//! orders can be reused across trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_fraction: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 300,
            max_depth: 10,
            min_leaf: 5,
            feature_fraction: 0.6,
        }
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Position of the split feature within the model's feature list, or
    /// `u32::MAX` for leaves.
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Class-1 weight fraction of the training rows in the node.
    pub value: f64,
}

impl Node {
    pub fn leaf(value: f64) -> Self {
        Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        }
    }

    pub fn split(feature: usize, threshold: f64, left: usize, right: usize, value: f64) -> Self {
        Node {
            feature: feature as u32,
            threshold,
            left: left as u32,
            right: right as u32,
            value,
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
    pub fn predict(&self, x: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0usize;
        loop {
            let node = &self.nodes[i];
            if node.is_leaf() {
                return node.value;
            }
            i = if x(node.feature as usize) <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    pub fn reads_feature(&self, j: usize) -> bool {
        self.nodes
            .iter()
            .any(|n| !n.is_leaf() && n.feature as usize == j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl RandomForest {
    pub fn probability_of(&self, x: impl Fn(usize) -> f64 + Copy) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        s / self.trees.len() as f64
    }
}

/// Training data in column-major layout, already in canonical row order.
pub struct ForestData<'a> {
    pub columns: &'a [Vec<f64>],
    pub w1: &'a [f64],
    pub w0: &'a [f64],
}

struct Presorted {
    /// For each feature, row indices ascending by value.
    order: Vec<Vec<u32>>,
}

fn presort(columns: &[Vec<f64>]) -> Presorted {
    let order = columns
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..col.len() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();
    Presorted { order }
}

struct Builder<'a> {
    data: &'a ForestData<'a>,
    params: ForestParams,
    mtry: usize,
    counts: Vec<u32>,
    /// Per-feature slices of in-bag rows, partitioned node by node.
    order: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
    n_left: usize,
}

impl<'a> Builder<'a> {
    fn node_totals(&self, start: usize, end: usize) -> (f64, f64, usize) {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0usize);
        for &r in &self.order[0][start..end] {
            let r = r as usize;
            let m = self.counts[r] as f64;
            a += m * self.data.w1[r];
            b += m * self.data.w0[r];
            c += self.counts[r] as usize;
        }
        (a, b, c)
    }

    fn build(&mut self, start: usize, end: usize, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let (w1, w0, count) = self.node_totals(start, end);
        let total = w1 + w0;
        let value = if total > 0.0 { w1 / total } else { 0.5 };
        let id = self.nodes.len();
        self.nodes.push(Node::leaf(value));
        if depth >= self.params.max_depth
            || count < 2 * self.params.min_leaf
            || w1 <= 0.0
            || w0 <= 0.0
        {
            return id;
        }

        // partial Fisher-Yates for the candidate features
        let p = self.features.len();
        for i in 0..self.mtry {
            let j = rng.random_range(i..p);
            self.features.swap(i, j);
        }
        let parent_score = (w1 * w1 + w0 * w0) / total;
        let mut best: Option<Best> = None;
        for fi in 0..self.mtry {
            let f = self.features[fi];
            if let Some(b) = self.scan(f, start, end, w1, w0, count) {
                let better = match &best {
                    None => true,
                    Some(cur) => {
                        b.score > cur.score || (b.score == cur.score && b.feature < cur.feature)
                    }
                };
                if better {
                    best = Some(b);
                }
            }
        }
        let Some(best) = best else { return id };
        if best.score - parent_score <= 1e-12 * total {
            return id;
        }

        let col = &self.data.columns[best.feature];
        for &r in &self.order[best.feature][start..end] {
            self.goes_left[r as usize] = col[r as usize] <= best.threshold;
        }
        for f in 0..self.order.len() {
            let slice = &mut self.order[f][start..end];
            let mut l = 0;
            self.scratch.clear();
            for k in 0..slice.len() {
                let r = slice[k];
                if self.goes_left[r as usize] {
                    slice[l] = r;
                    l += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            slice[l..].copy_from_slice(&self.scratch);
            debug_assert_eq!(l, best.n_left);
        }
        let mid = start + best.n_left;
        let left = self.build(start, mid, depth + 1, rng);
        let right = self.build(mid, end, depth + 1, rng);
        self.nodes[id] = Node::split(best.feature, best.threshold, left, right, value);
        id
    }

    fn scan(
        &self,
        f: usize,
        start: usize,
        end: usize,
        w1: f64,
        w0: f64,
        count: usize,
    ) -> Option<Best> {
        let col = &self.data.columns[f];
        let rows = &self.order[f][start..end];
        let min_leaf = self.params.min_leaf.max(1);
        let (mut l1, mut l0, mut lc) = (0.0, 0.0, 0usize);
        let mut best: Option<Best> = None;
        for k in 0..rows.len() - 1 {
            let r = rows[k] as usize;
            let m = self.counts[r] as f64;
            l1 += m * self.data.w1[r];
            l0 += m * self.data.w0[r];
            lc += self.counts[r] as usize;
            let v = col[r];
            let next = col[rows[k + 1] as usize];
            if next <= v {
                continue;
            }
            if lc < min_leaf {
                continue;
            }
            if count - lc < min_leaf {
                break;
            }
            let (r1, r0) = (w1 - l1, w0 - l0);
            let lw = l1 + l0;
            let rw = r1 + r0;
            if lw <= 0.0 || rw <= 0.0 {
                continue;
            }
            let score = (l1 * l1 + l0 * l0) / lw + (r1 * r1 + r0 * r0) / rw;
            if best.as_ref().is_none_or(|b| score > b.score) {
                let mut threshold = 0.5 * (v + next);
                if !(threshold < next) {
                    threshold = v;
                }
                best = Some(Best {
                    feature: f,
                    threshold,
                    score,
                    n_left: k + 1,
                });
            }
        }
        best
    }
}

pub fn fit_forest(data: &ForestData<'_>, params: ForestParams, seed: u64) -> RandomForest {
    let n = data.w1.len();
    let p = data.columns.len();
    let pre = presort(data.columns);
    let mtry = ((params.feature_fraction * p as f64).round() as usize).clamp(1, p.max(1));
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
        if p == 0 {
            let (mut a, mut b) = (0.0, 0.0);
            for i in 0..n {
                a += counts[i] as f64 * data.w1[i];
                b += counts[i] as f64 * data.w0[i];
            }
            let v = if a + b > 0.0 { a / (a + b) } else { 0.5 };
            trees.push(Tree {
                nodes: vec![Node::leaf(v)],
            });
            continue;
        }
        let order: Vec<Vec<u32>> = pre
            .order
            .iter()
            .map(|o| {
                o.iter()
                    .copied()
                    .filter(|&r| counts[r as usize] > 0)
                    .collect()
            })
            .collect();
        let in_bag = order[0].len();
        let mut b = Builder {
            data,
            params,
            mtry,
            counts,
            order,
            scratch: Vec::with_capacity(in_bag),
            goes_left: vec![false; n],
            nodes: Vec::new(),
            features: (0..p).collect(),
        };
        b.build(0, in_bag, 0, &mut rng);
        trees.push(Tree { nodes: b.nodes });
    }
    RandomForest { params, trees }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_split_recovers_step() {
        let x: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| f64::from(v >= 100.0)).collect();
        let w0: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
        let cols = vec![x];
        let data = ForestData {
            columns: &cols,
            w1: &y,
            w0: &w0,
        };
        let params = ForestParams {
            n_trees: 20,
            max_depth: 3,
            min_leaf: 1,
            feature_fraction: 1.0,
        };
        let f = fit_forest(&data, params, 1);
        assert!(f.probability_of(|_| 10.0) < 0.05);
        assert!(f.probability_of(|_| 190.0) > 0.95);
    }

    #[test]
    fn soft_labels_average_in_leaves() {
        let cols = vec![vec![0.0; 50]];
        let w1 = vec![0.3; 50];
        let w0 = vec![0.7; 50];
        let data = ForestData {
            columns: &cols,
            w1: &w1,
            w0: &w0,
        };
        let f = fit_forest(&data, ForestParams::default(), 9);
        assert!((f.probability_of(|_| 0.0) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn depth_limit_respected() {
        let x: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..64).map(|i| f64::from(i % 2 == 0)).collect();
        let w0: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
        let cols = vec![x];
        let data = ForestData {
            columns: &cols,
            w1: &y,
            w0: &w0,
        };
        let params = ForestParams {
            n_trees: 3,
            max_depth: 2,
            min_leaf: 1,
            feature_fraction: 1.0,
        };
        let f = fit_forest(&data, params, 2);
        for t in &f.trees {
            assert!(t.nodes.len() <= 7);
        }
    }
}
