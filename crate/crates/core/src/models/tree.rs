//! A small greedy CART learner for interpretable rescoring rules.
//!
//! Trees fit on the 13-column feature frame give back rules of the same
//! shape as the classic rescoring heuristics ("if the current sleep bout is
//! shorter than …, rescore as wake"), which is what makes them worth
//! having next to the regressions.
//!
//! Splits minimize weighted Gini impurity, with thresholds placed at
//! midpoints between adjacent distinct values and `≤ threshold` going left.
//! Impurity comparisons run in exact integer arithmetic so tie-breaking
//! (lowest feature index, then lowest threshold) is deterministic; a split
//! that leaves impurity unchanged is still taken, which lets depth-2 trees
//! solve parity-style label patterns.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::columns;
use crate::num::{Matrix, Scalar};

/// One node of a fitted tree; children are indices into the node arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TreeNode<S> {
    Split { feature: usize, threshold: S, left: usize, right: usize },
    /// `prob` is the training-label mean (probability of wake); `class` is
    /// its rounding.
    Leaf { class: u8, prob: S },
}

/// A fitted decision tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTree<S> {
    pub nodes: Vec<TreeNode<S>>,
    pub n_features: usize,
}

impl<S: Scalar> RuleTree<S> {
    /// Probability of wake for one feature row.
    pub fn predict_row(&self, row: &[S]) -> Result<S> {
        if row.len() != self.n_features {
            return Err(Error::ArityMismatch { expected: self.n_features, got: row.len() });
        }
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { prob, .. } => return Ok(*prob),
            }
        }
    }

    pub fn predict(&self, features: &Matrix<S>) -> Result<Vec<S>> {
        features.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    /// Hard class for one row: 1 = wake, 0 = sleep.
    pub fn predict_class(&self, row: &[S]) -> Result<u8> {
        let half = S::one() / (S::one() + S::one());
        Ok((self.predict_row(row)? >= half) as u8)
    }

    pub fn depth(&self) -> usize {
        fn walk<S>(nodes: &[TreeNode<S>], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// GraphViz rendering; feature names are used when the tree was fit on
    /// the standard 13-column frame.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph rule_tree {\n  node [shape=box];\n");
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                TreeNode::Split { feature, threshold, left, right } => {
                    let name = if self.n_features == columns::COUNT {
                        columns::NAMES[*feature].to_string()
                    } else {
                        format!("x{feature}")
                    };
                    let _ = writeln!(out, "  n{i} [label=\"{name} <= {threshold}\"];");
                    let _ = writeln!(out, "  n{i} -> n{left} [label=\"yes\"];");
                    let _ = writeln!(out, "  n{i} -> n{right} [label=\"no\"];");
                }
                TreeNode::Leaf { class, prob } => {
                    let label = if *class == 1 { "wake" } else { "sleep" };
                    let _ = writeln!(out, "  n{i} [label=\"{label} (p={prob})\"];");
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

struct SplitChoice<S> {
    feature: usize,
    threshold: S,
    // Exact impurity comparison state: impurity ∝ q / (left_n · right_n).
    q: u128,
    denom: u128,
}

fn side_term(n: u128, ones: u128) -> u128 {
    let zeros = n - ones;
    n * n - ones * ones - zeros * zeros
}

/// Fits a CART tree on feature rows and binary labels.
pub fn fit_tree<S: Scalar>(
    features: &Matrix<S>,
    labels: &[S],
    max_depth: usize,
    min_leaf: usize,
) -> Result<RuleTree<S>> {
    if features.rows() == 0 {
        return Err(Error::EmptySequence);
    }
    if features.rows() != labels.len() {
        return Err(Error::LengthMismatch { left: features.rows(), right: labels.len() });
    }
    if min_leaf == 0 {
        return Err(Error::InvalidConfig("min_leaf must be at least 1".into()));
    }
    for (i, &y) in labels.iter().enumerate() {
        if !(y == S::zero() || y == S::one()) {
            return Err(Error::NonBinaryScore { index: i, value: y.to_f64().unwrap_or(f64::NAN) });
        }
    }
    if features.iter_rows().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteInput { context: "tree features".into() });
    }

    let mut nodes = Vec::new();
    let indices: Vec<usize> = (0..features.rows()).collect();
    build(features, labels, &indices, max_depth, min_leaf, &mut nodes);
    Ok(RuleTree { nodes, n_features: features.cols() })
}

fn build<S: Scalar>(
    features: &Matrix<S>,
    labels: &[S],
    indices: &[usize],
    depth_left: usize,
    min_leaf: usize,
    nodes: &mut Vec<TreeNode<S>>,
) -> usize {
    let n = indices.len();
    let ones = indices.iter().filter(|&&i| labels[i] == S::one()).count();

    let make_leaf = |nodes: &mut Vec<TreeNode<S>>| {
        let prob = S::from_usize(ones).unwrap() / S::from_usize(n).unwrap();
        let half = S::one() / (S::one() + S::one());
        let class = (prob >= half) as u8;
        nodes.push(TreeNode::Leaf { class, prob });
        nodes.len() - 1
    };

    if depth_left == 0 || ones == 0 || ones == n || n < 2 * min_leaf {
        return make_leaf(nodes);
    }

    let mut best: Option<SplitChoice<S>> = None;
    let mut column: Vec<(S, u8)> = Vec::with_capacity(n);
    for feature in 0..features.cols() {
        column.clear();
        column.extend(indices.iter().map(|&i| {
            (features.row(i)[feature], (labels[i] == S::one()) as u8)
        }));
        column.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("features validated finite"));

        let mut left_n = 0u128;
        let mut left_ones = 0u128;
        for i in 0..n - 1 {
            left_n += 1;
            left_ones += column[i].1 as u128;
            let (lo, hi) = (column[i].0, column[i + 1].0);
            if lo == hi {
                continue;
            }
            let right_n = n as u128 - left_n;
            if (left_n as usize) < min_leaf || (right_n as usize) < min_leaf {
                continue;
            }
            let right_ones = ones as u128 - left_ones;
            let q = side_term(left_n, left_ones) * right_n
                + side_term(right_n, right_ones) * left_n;
            let denom = left_n * right_n;
            let better = match &best {
                None => true,
                Some(b) => q * b.denom < b.q * denom,
            };
            if better {
                // Midpoint threshold; when rounding would push it onto the
                // upper value, fall back to the lower value so `≤` still
                // partitions the sorted column where intended.
                let two = S::one() + S::one();
                let mut threshold = lo + (hi - lo) / two;
                if !(threshold < hi) {
                    threshold = lo;
                }
                best = Some(SplitChoice { feature, threshold, q, denom });
            }
        }
    }

    let Some(choice) = best else {
        // Every feature is constant on this subset.
        return make_leaf(nodes);
    };

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .copied()
        .partition(|&i| features.row(i)[choice.feature] <= choice.threshold);

    let at = nodes.len();
    nodes.push(TreeNode::Leaf { class: 0, prob: S::zero() }); // placeholder
    let left = build(features, labels, &left_idx, depth_left - 1, min_leaf, nodes);
    let right = build(features, labels, &right_idx, depth_left - 1, min_leaf, nodes);
    nodes[at] = TreeNode::Split { feature: choice.feature, threshold: choice.threshold, left, right };
    at
}
