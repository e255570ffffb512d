//! Complete oblique trees with probabilistic routing.
//!
//! Internal nodes are stored in level order: node `i` has children `2i+1`
//! (left) and `2i+2` (right). Index `I + l` is leaf `l`, so leaves are numbered
//! left to right. Every split reads an augmented input `[x, 1]`; the last
//! column of `theta` is the node's bias.
//!
//! Going left at node `i` has probability `σ(x_augᵀθ_i)`, going right
//! `1 - σ(x_augᵀθ_i)`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ResotError, Result};

/// Logistic inputs are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 500.0;

#[inline]
pub fn sigmoid(a: f64) -> f64 {
    let a = a.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    1.0 / (1.0 + (-a).exp())
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

#[inline]
pub(crate) fn left_child(i: usize) -> usize {
    2 * i + 1
}

#[inline]
pub(crate) fn right_child(i: usize) -> usize {
    2 * i + 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObliqueTree {
    depth: usize,
    theta: Array2<f64>,
    leaf_logits: Array2<f64>,
    feature_names: Vec<String>,
}

impl ObliqueTree {
    /// All-zero splits and uniform leaves.
    pub fn zeros(depth: usize, feature_names: Vec<String>, classes: usize) -> Result<Self> {
        validate_shape(depth, classes)?;
        let internal = (1 << depth) - 1;
        let d = feature_names.len();
        Ok(Self {
            depth,
            theta: Array2::zeros((internal, d + 1)),
            leaf_logits: Array2::zeros((1 << depth, classes)),
            feature_names,
        })
    }

    /// Split weights uniform in `±sqrt(6 / (D' + 1))`, uniform leaves.
    pub fn random<R: Rng + ?Sized>(depth: usize, feature_names: Vec<String>, classes: usize, rng: &mut R) -> Result<Self> {
        let mut tree = Self::zeros(depth, feature_names, classes)?;
        let scale = (6.0 / (tree.theta.ncols() as f64 + 1.0)).sqrt();
        tree.theta.iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
        Ok(tree)
    }

    pub fn from_parts(depth: usize, theta: Array2<f64>, leaf_logits: Array2<f64>, feature_names: Vec<String>) -> Result<Self> {
        validate_shape(depth, leaf_logits.ncols())?;
        let internal = (1 << depth) - 1;
        if theta.nrows() != internal {
            return Err(ResotError::DimensionMismatch { expected: internal, actual: theta.nrows() });
        }
        if theta.ncols() != feature_names.len() + 1 {
            return Err(ResotError::DimensionMismatch { expected: feature_names.len() + 1, actual: theta.ncols() });
        }
        if leaf_logits.nrows() != 1 << depth {
            return Err(ResotError::DimensionMismatch { expected: 1 << depth, actual: leaf_logits.nrows() });
        }
        if theta.iter().chain(leaf_logits.iter()).any(|v| !v.is_finite()) {
            return Err(ResotError::NonFinite("tree parameters".into()));
        }
        Ok(Self {
            depth,
            theta: theta.as_standard_layout().into_owned(),
            leaf_logits: leaf_logits.as_standard_layout().into_owned(),
            feature_names,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `I = 2^depth - 1`.
    pub fn internal_count(&self) -> usize {
        self.theta.nrows()
    }

    /// `L = 2^depth`.
    pub fn leaf_count(&self) -> usize {
        self.leaf_logits.nrows()
    }

    /// `D`, not counting the bias column.
    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn class_count(&self) -> usize {
        self.leaf_logits.ncols()
    }

    /// Column index of the bias in `theta`.
    pub fn bias_column(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn set_feature_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.feature_names.len() {
            return Err(ResotError::DimensionMismatch { expected: self.feature_names.len(), actual: names.len() });
        }
        self.feature_names = names;
        Ok(())
    }

    pub fn theta(&self) -> &Array2<f64> {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut Array2<f64> {
        &mut self.theta
    }

    pub fn leaf_logits(&self) -> &Array2<f64> {
        &self.leaf_logits
    }

    pub fn leaf_logits_mut(&mut self) -> &mut Array2<f64> {
        &mut self.leaf_logits
    }

    /// `ω_l`: softmax of leaf `l`'s logits.
    pub fn leaf_distribution(&self, leaf: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.class_count()];
        softmax_into(self.leaf_logits.row(leaf).as_slice().expect("standard layout"), &mut out);
        out
    }

    /// `ω` for all leaves, `L × K`.
    pub fn leaf_distributions(&self) -> Array2<f64> {
        let mut out = Array2::zeros(self.leaf_logits.raw_dim());
        for l in 0..self.leaf_count() {
            let row = self.leaf_distribution(l);
            out.row_mut(l).iter_mut().zip(row).for_each(|(o, v)| *o = v);
        }
        out
    }

    /// `x_augᵀθ_i` for an unaugmented `x` of length `D`.
    #[inline]
    pub fn split_logit(&self, node: usize, x: &[f64]) -> f64 {
        let row = self.theta.row(node);
        let row = row.as_slice().expect("standard layout");
        let (weights, bias) = row.split_at(row.len() - 1);
        dot(weights, x) + bias[0]
    }

    /// `σ(x_augᵀθ_i)`, where `x_aug` already carries the trailing 1.
    pub fn split_probability(&self, node: usize, x_aug: &[f64]) -> Result<f64> {
        if x_aug.len() != self.theta.ncols() {
            return Err(ResotError::DimensionMismatch { expected: self.theta.ncols(), actual: x_aug.len() });
        }
        if node >= self.internal_count() {
            return Err(ResotError::InvalidArgument(format!("node {node} is not an internal node")));
        }
        Ok(sigmoid(dot(self.theta.row(node).as_slice().expect("standard layout"), x_aug)))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_count() {
            return Err(ResotError::DimensionMismatch { expected: self.feature_count(), actual: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ResotError::NonFinite("feature vector".into()));
        }
        Ok(())
    }

    /// Soft routing: probability of visiting every internal node and reaching every leaf.
    pub fn route(&self, x: &[f64]) -> Result<RoutingTrace> {
        self.check_input(x)?;
        let internal = self.internal_count();
        let mut split_probs = vec![0.0; internal];
        for (i, s) in split_probs.iter_mut().enumerate() {
            *s = sigmoid(self.split_logit(i, x));
        }
        let mut node_probs = vec![0.0; internal];
        let mut leaf_probs = vec![0.0; self.leaf_count()];
        propagate(&split_probs, &mut node_probs, &mut leaf_probs);
        Ok(RoutingTrace { split_probs, node_probs, leaf_probs })
    }

    /// `Σ_l p(l|x) ω_l`.
    pub fn predict_multipath(&self, x: &[f64]) -> Result<Vec<f64>> {
        let trace = self.route(x)?;
        let omega = self.leaf_distributions();
        let mut out = vec![0.0; self.class_count()];
        for (l, p) in trace.leaf_probs.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(omega.row(l)) {
                *o += p * w;
            }
        }
        Ok(out)
    }

    /// Follows the more probable branch at every node using sign comparisons
    /// only; a logit of exactly zero goes left.
    pub fn predict_singlepath(&self, x: &[f64]) -> Result<SinglePath> {
        self.check_input(x)?;
        let (path, leaf) = descend(self, x);
        Ok(SinglePath { distribution: self.leaf_distribution(leaf), path, leaf })
    }

    /// Mean number of nonzero `theta` entries (bias included) read per inference.
    pub fn count_used_parameters(&self, mode: InferenceMode, samples: ArrayView2<'_, f64>) -> Result<f64> {
        if samples.nrows() == 0 {
            return Err(ResotError::InvalidArgument("empty sample set".into()));
        }
        let row_nnz: Vec<usize> = self.theta.rows().into_iter().map(|r| r.iter().filter(|v| **v != 0.0).count()).collect();
        match mode {
            InferenceMode::Multipath => Ok(row_nnz.iter().sum::<usize>() as f64),
            InferenceMode::Singlepath => {
                let mut total = 0usize;
                for x in samples.rows() {
                    let x = x.to_vec();
                    self.check_input(&x)?;
                    let (path, _) = descend(self, &x);
                    total += path.iter().map(|&i| row_nnz[i]).sum::<usize>();
                }
                Ok(total as f64 / samples.nrows() as f64)
            }
        }
    }

    /// Count of nonzero non-bias weights.
    pub fn nonzero_weights(&self) -> usize {
        let bias = self.bias_column();
        self.theta.indexed_iter().filter(|((_, j), v)| *j != bias && **v != 0.0).count()
    }

    pub fn theta_row(&self, node: usize) -> ArrayView1<'_, f64> {
        self.theta.row(node)
    }
}

fn validate_shape(depth: usize, classes: usize) -> Result<()> {
    if depth == 0 || depth > 20 {
        return Err(ResotError::InvalidArgument(format!("depth must be in 1..=20, got {depth}")));
    }
    if classes < 2 {
        return Err(ResotError::InvalidArgument(format!("need at least 2 classes, got {classes}")));
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Top-down visit probabilities from per-node left probabilities.
pub(crate) fn propagate(split_probs: &[f64], node_probs: &mut [f64], leaf_probs: &mut [f64]) {
    let internal = split_probs.len();
    node_probs[0] = 1.0;
    for i in 0..internal {
        let p = node_probs[i];
        let s = split_probs[i];
        for (child, q) in [(left_child(i), p * s), (right_child(i), p * (1.0 - s))] {
            if child < internal {
                node_probs[child] = q;
            } else {
                leaf_probs[child - internal] = q;
            }
        }
    }
}

/// Soft-routing result for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTrace {
    /// `σ(d_i)`: probability of taking the left branch at each internal node.
    pub split_probs: Vec<f64>,
    /// `p_{n,i}`: probability of visiting each internal node.
    pub node_probs: Vec<f64>,
    /// `p(l|x)` per leaf.
    pub leaf_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinglePath {
    pub distribution: Vec<f64>,
    /// Visited internal nodes, root first.
    pub path: Vec<usize>,
    pub leaf: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InferenceMode {
    Multipath,
    Singlepath,
}

/// Anything that can evaluate a split logit row by row.
pub trait SplitRows {
    fn depth(&self) -> usize;
    fn split_logit(&self, node: usize, x: &[f64]) -> f64;
}

impl SplitRows for ObliqueTree {
    fn depth(&self) -> usize {
        self.depth
    }

    fn split_logit(&self, node: usize, x: &[f64]) -> f64 {
        ObliqueTree::split_logit(self, node, x)
    }
}

/// Hard descent: returns the visited internal nodes and the reached leaf.
pub fn descend<R: SplitRows + ?Sized>(rows: &R, x: &[f64]) -> (Vec<usize>, usize) {
    let depth = rows.depth();
    let internal = (1 << depth) - 1;
    let mut path = Vec::with_capacity(depth);
    let mut node = 0;
    while node < internal {
        path.push(node);
        node = if rows.split_logit(node, x) >= 0.0 { left_child(node) } else { right_child(node) };
    }
    (path, node - internal)
}
