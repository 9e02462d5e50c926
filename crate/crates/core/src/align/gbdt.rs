//! Gradient-boosted regression trees for the logistic loss.
//!
//! Each tree is fitted to the per-row gradient `g = p - y` and hessian
//! `h = p (1 - p)` of the current model. Splits are exact: candidate
//! thresholds are midpoints between consecutive distinct values of a feature
//! within the node, scored by
//! `G_L^2 / (H_L + lambda) + G_R^2 / (H_R + lambda) - G^2 / (H + lambda)`
//! subject to `min_samples_leaf` rows on each side. Leaves take the Newton
//! value `-G / (H + lambda)`. The first maximal split wins (feature order, then
//! ascending threshold). Rows with `x < threshold` go left.

use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use super::{AlignError, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// L2 penalty on leaf values.
    #[serde(default = "default_leaf_l2")]
    pub leaf_l2: f64,
    pub seed: u64,
}

fn default_leaf_l2() -> f64 {
    1.0
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            leaf_l2: default_leaf_l2(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Flat tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    /// Features this tree splits on, ascending, without duplicates.
    pub fn split_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    /// Log-odds of the training prevalence.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GbdtParams {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        let mut raw = self.base_score;
        for t in &self.trees {
            raw += self.learning_rate * t.predict(x);
        }
        raw
    }

    /// Raw score after 0, 1, ..., n_trees trees.
    pub fn raw_score_staged(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trees.len() + 1);
        let mut raw = self.base_score;
        out.push(raw);
        for t in &self.trees {
            raw += self.learning_rate * t.predict(x);
            out.push(raw);
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw_score(x))
    }
}

/// Per-feature sorted distinct values and each row's bin index.
struct Binned {
    values: Vec<Vec<f64>>,
    bins: Vec<Vec<u32>>,
}

impl Binned {
    fn new(matrix: &FeatureMatrix) -> Self {
        let d = matrix.dim();
        let mut values = Vec::with_capacity(d);
        let mut bins = Vec::with_capacity(d);
        for j in 0..d {
            let col = matrix.column(j);
            let mut distinct = col.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let idx = col
                .iter()
                .map(|v| distinct.binary_search_by(|p| p.total_cmp(v)).expect("value present") as u32)
                .collect();
            values.push(distinct);
            bins.push(idx);
        }
        Self { values, bins }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    /// Rows with bin index <= this go left.
    pub last_left_bin: u32,
}

struct Builder<'a> {
    binned: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    config: &'a GbdtConfig,
    nodes: Vec<TreeNode>,
    // scratch histogram: (g, h, count) per bin
    hist: Vec<(f64, f64, usize)>,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

impl<'a> Builder<'a> {
    fn best_split(&mut self, rows: &[usize]) -> Option<SplitChoice> {
        let lambda = self.config.leaf_l2;
        let min_leaf = self.config.min_samples_leaf.max(1);
        let n = rows.len();
        if n < 2 * min_leaf {
            return None;
        }
        let (g_total, h_total) = rows
            .iter()
            .fold((0.0, 0.0), |(g, h), &r| (g + self.grad[r], h + self.hess[r]));
        let parent = score(g_total, h_total, lambda);
        let mut best: Option<SplitChoice> = None;
        for (j, values) in self.binned.values.iter().enumerate() {
            let bins = &self.binned.bins[j];
            self.hist.clear();
            self.hist.resize(values.len(), (0.0, 0.0, 0));
            for &r in rows {
                let b = &mut self.hist[bins[r] as usize];
                b.0 += self.grad[r];
                b.1 += self.hess[r];
                b.2 += 1;
            }
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
            let mut prev: Option<usize> = None;
            for (b, &(g, h, c)) in self.hist.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                if let Some(p) = prev {
                    let nr = n - nl;
                    if nl >= min_leaf && nr >= min_leaf {
                        let gain = score(gl, hl, lambda) + score(g_total - gl, h_total - hl, lambda) - parent;
                        if gain > 1e-12 && best.is_none_or(|s| gain > s.gain) {
                            best = Some(SplitChoice {
                                feature: j,
                                threshold: 0.5 * (values[p] + values[b]),
                                gain,
                                last_left_bin: p as u32,
                            });
                        }
                    }
                }
                gl += g;
                hl += h;
                nl += c;
                prev = Some(b);
            }
        }
        best
    }

    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let (g, h) = rows
            .iter()
            .fold((0.0, 0.0), |(g, h), &r| (g + self.grad[r], h + self.hess[r]));
        -g / (h + self.config.leaf_l2)
    }

    fn build(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0 });
        let split = if depth < self.config.max_depth {
            self.best_split(rows)
        } else {
            None
        };
        match split {
            None => {
                self.nodes[id] = TreeNode::Leaf {
                    value: self.leaf_value(rows),
                };
            }
            Some(s) => {
                let bins = &self.binned.bins[s.feature];
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| bins[i] <= s.last_left_bin);
                let left = self.build(&l, depth + 1);
                let right = self.build(&r, depth + 1);
                self.nodes[id] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }
}

pub fn fit_gbdt(matrix: &FeatureMatrix, config: &GbdtConfig) -> Result<GbdtParams, AlignError> {
    matrix.require_both_classes()?;
    if !(config.learning_rate > 0.0) || !(config.leaf_l2 >= 0.0) {
        return Err(AlignError::Precondition("learning_rate must be positive and leaf_l2 non-negative".into()));
    }
    let n = matrix.len();
    let prevalence = matrix.positives() as f64 / n as f64;
    let base_score = (prevalence / (1.0 - prevalence)).ln();
    let binned = Binned::new(matrix);
    let y: Vec<f64> = matrix.rows.iter().map(|r| r.y.as_u8() as f64).collect();
    let mut raw = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let rows: Vec<usize> = (0..n).collect();
    let mut trees = Vec::with_capacity(config.n_trees);
    for _ in 0..config.n_trees {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = p - y[i];
            hess[i] = p * (1.0 - p);
        }
        let mut builder = Builder {
            binned: &binned,
            grad: &grad,
            hess: &hess,
            config,
            nodes: Vec::new(),
            hist: Vec::new(),
        };
        builder.build(&rows, 0);
        let tree = Tree { nodes: builder.nodes };
        for (i, r) in matrix.rows.iter().enumerate() {
            raw[i] += config.learning_rate * tree.predict(&r.x);
        }
        trees.push(tree);
    }
    Ok(GbdtParams {
        base_score,
        learning_rate: config.learning_rate,
        trees,
    })
}
