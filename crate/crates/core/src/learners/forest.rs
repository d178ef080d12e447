//! Bagged CART classifiers with majority voting.
//!
//! Bootstrap resamples are represented as per-row multiplicities, so a node
//! holds each distinct training row once together with its weight. Every
//! node keeps its rows presorted by each feature; children inherit the order
//! through a stable partition, so split search is a linear scan.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check_binary;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Gini => "gini",
            Criterion::Entropy => "entropy",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gini" => Ok(Criterion::Gini),
            "entropy" => Ok(Criterion::Entropy),
            other => Err(Error::InvalidArgument(format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (n_features as f64).log2().floor() as usize,
            MaxFeatures::All => n_features,
        };
        k.clamp(1, n_features.max(1))
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaxFeatures::Sqrt => "sqrt",
            MaxFeatures::Log2 => "log2",
            MaxFeatures::All => "all",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub criterion: Criterion,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            criterion: Criterion::Gini,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: u8,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        counts: [u32; 2],
    },
}

/// Nodes are stored in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf_for(&self, row: &[f64]) -> [u32; 2] {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    /// Majority class of the reached leaf; ties go to class 0.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let c = self.leaf_for(row);
        u8::from(c[1] > c[0])
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            if let Node::Split { left, right, .. } = self.nodes[i] {
                stack.push((left as usize, d + 1));
                stack.push((right as usize, d + 1));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub params: ForestParams,
    pub n_features: usize,
    pub seed: u64,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn votes(&self, row: &[f64]) -> [usize; 2] {
        let mut v = [0usize; 2];
        for t in &self.trees {
            v[t.predict_row(row) as usize] += 1;
        }
        v
    }

    /// Majority vote over trees; ties go to class 0.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let v = self.votes(row);
        u8::from(v[1] > v[0])
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }
}

/// Weighted impurity times node weight, so that lower is better and child
/// sums are directly comparable.
fn weighted_impurity(criterion: Criterion, c0: f64, c1: f64) -> f64 {
    let n = c0 + c1;
    if n <= 0.0 {
        return 0.0;
    }
    match criterion {
        Criterion::Gini => n - (c0 * c0 + c1 * c1) / n,
        Criterion::Entropy => {
            let h = |c: f64| if c > 0.0 { -c * (c / n).log2() } else { 0.0 };
            h(c0) + h(c1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub score: f64,
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    weight: Vec<u32>,
    params: ForestParams,
    k_features: usize,
    goes_left: Vec<bool>,
}

struct Task {
    parent: Option<(usize, bool)>,
    sorted: Vec<Vec<u32>>,
    depth: usize,
}

impl TreeBuilder<'_> {
    fn counts(&self, rows: &[u32]) -> [u32; 2] {
        let mut c = [0u32; 2];
        for &r in rows {
            c[self.y[r as usize] as usize] += self.weight[r as usize];
        }
        c
    }

    /// Best threshold on one feature over rows sorted by that feature.
    fn best_on_feature(&self, feature: usize, rows: &[u32], total: [u32; 2]) -> Option<SplitChoice> {
        let min_leaf = self.params.min_samples_leaf.max(1) as u64;
        let n_total = u64::from(total[0]) + u64::from(total[1]);
        let mut left = [0u64; 2];
        let mut best: Option<SplitChoice> = None;
        for w in 0..rows.len().saturating_sub(1) {
            let r = rows[w] as usize;
            left[self.y[r] as usize] += u64::from(self.weight[r]);
            let here = self.x.get(r, feature);
            let next = self.x.get(rows[w + 1] as usize, feature);
            if next <= here {
                continue;
            }
            let n_left = left[0] + left[1];
            if n_left < min_leaf || n_total - n_left < min_leaf {
                continue;
            }
            let score = weighted_impurity(self.params.criterion, left[0] as f64, left[1] as f64)
                + weighted_impurity(
                    self.params.criterion,
                    (u64::from(total[0]) - left[0]) as f64,
                    (u64::from(total[1]) - left[1]) as f64,
                );
            if best.is_none_or(|b| score < b.score) {
                best = Some(SplitChoice {
                    feature,
                    threshold: here + (next - here) / 2.0,
                    score,
                });
            }
        }
        best
    }

    fn build(mut self, rng: &mut ChaCha8Rng) -> DecisionTree {
        let d = self.x.cols();
        let active: Vec<u32> = (0..self.x.rows() as u32).filter(|&r| self.weight[r as usize] > 0).collect();
        let sorted: Vec<Vec<u32>> = (0..d)
            .map(|f| {
                let mut v = active.clone();
                v.sort_by(|&a, &b| {
                    self.x
                        .get(a as usize, f)
                        .total_cmp(&self.x.get(b as usize, f))
                        .then(a.cmp(&b))
                });
                v
            })
            .collect();

        let mut nodes: Vec<Node> = Vec::new();
        let mut stack = vec![Task {
            parent: None,
            sorted,
            depth: 0,
        }];
        let mut feature_order: Vec<usize> = (0..d).collect();

        while let Some(task) = stack.pop() {
            let idx = nodes.len();
            if let Some((p, is_left)) = task.parent {
                if let Node::Split { left, right, .. } = &mut nodes[p] {
                    if is_left {
                        *left = idx as u32;
                    } else {
                        *right = idx as u32;
                    }
                }
            }
            let rows = &task.sorted[0];
            let counts = self.counts(rows);
            let n = u64::from(counts[0]) + u64::from(counts[1]);
            let depth_ok = self.params.max_depth.is_none_or(|m| task.depth < m);
            let splittable = depth_ok
                && counts[0] > 0
                && counts[1] > 0
                && n >= self.params.min_samples_split.max(2) as u64;

            let choice = if splittable { self.choose_split(&task.sorted, counts, rng, &mut feature_order) } else { None };
            let Some(choice) = choice else {
                nodes.push(Node::Leaf { counts });
                continue;
            };

            nodes.push(Node::Split {
                feature: choice.feature as u8,
                threshold: choice.threshold,
                left: 0,
                right: 0,
            });
            for &r in rows {
                self.goes_left[r as usize] = self.x.get(r as usize, choice.feature) <= choice.threshold;
            }
            let mut left_sorted = Vec::with_capacity(d);
            let mut right_sorted = Vec::with_capacity(d);
            for list in task.sorted {
                let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&r| self.goes_left[r as usize]);
                left_sorted.push(l);
                right_sorted.push(r);
            }
            // right pushed first so the left subtree is emitted first (preorder)
            stack.push(Task {
                parent: Some((idx, false)),
                sorted: right_sorted,
                depth: task.depth + 1,
            });
            stack.push(Task {
                parent: Some((idx, true)),
                sorted: left_sorted,
                depth: task.depth + 1,
            });
        }
        DecisionTree { nodes }
    }

    /// Draw features in random order and evaluate the first `k` that are not
    /// constant in the node. Ties prefer the lower feature index, then the
    /// lower threshold.
    fn choose_split(
        &self,
        sorted: &[Vec<u32>],
        counts: [u32; 2],
        rng: &mut ChaCha8Rng,
        order: &mut [usize],
    ) -> Option<SplitChoice> {
        order.shuffle(rng);
        let mut tried = 0;
        let mut best: Option<SplitChoice> = None;
        for &f in order.iter() {
            if tried >= self.k_features {
                break;
            }
            let rows = &sorted[f];
            let first = self.x.get(rows[0] as usize, f);
            let last = self.x.get(rows[rows.len() - 1] as usize, f);
            if last <= first {
                continue;
            }
            tried += 1;
            if let Some(c) = self.best_on_feature(f, rows, counts) {
                let better = match best {
                    None => true,
                    Some(b) => c.score < b.score || (c.score == b.score && c.feature < b.feature),
                };
                if better {
                    best = Some(c);
                }
            }
        }
        best
    }
}

fn train_tree(x: &Matrix, y: &[u8], params: &ForestParams, seed: u64) -> DecisionTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.rows();
    let weight = if params.bootstrap {
        let mut w = vec![0u32; n];
        for _ in 0..n {
            w[rng.gen_range(0..n)] += 1;
        }
        w
    } else {
        vec![1u32; n]
    };
    TreeBuilder {
        x,
        y,
        weight,
        params: *params,
        k_features: params.max_features.resolve(x.cols()),
        goes_left: vec![false; n],
    }
    .build(&mut rng)
}

/// Tree `i` is grown from `seed + i`, so parallel and sequential training agree.
pub fn train_random_forest(x: &Matrix, y: &[u8], params: &ForestParams, seed: u64) -> Result<RandomForest> {
    check_binary(y)?;
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch(x.rows(), y.len()));
    }
    if params.n_estimators == 0 {
        return Err(Error::InvalidArgument("n_estimators must be positive".into()));
    }
    if x.rows() < params.min_samples_split.max(1) {
        return Err(Error::TooFewSamples {
            needed: params.min_samples_split,
            got: x.rows(),
        });
    }
    if x.cols() > usize::from(u8::MAX) {
        return Err(Error::InvalidArgument("too many features".into()));
    }
    let trees = (0..params.n_estimators as u64)
        .into_par_iter()
        .map(|i| train_tree(x, y, params, seed.wrapping_add(i)))
        .collect();
    Ok(RandomForest {
        params: *params,
        n_features: x.cols(),
        seed,
        trees,
    })
}
