//! The regularized log-likelihood and its analytic gradient.
//!
//! `O = Σ_n log Σ_l p(l|x_n) ω_{l,y_n} - λ Ω`, maximized. `λ` is stored as a
//! non-negative magnitude and subtracted, so a larger penalty always lowers
//! `O`.

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::RegMode;
use crate::cost::CostVector;
use crate::error::{ResotError, Result};
use crate::tree::{left_child, propagate, right_child, sigmoid, ObliqueTree};

/// The inner mixture probability is clamped here before taking the log.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

const CHUNK: usize = 32;

/// `Σ_ij θ_ij²`, bias column included.
pub fn l2_penalty(tree: &ObliqueTree) -> f64 {
    tree.theta().iter().map(|v| v * v).sum()
}

/// `(1/N) Σ_n Σ_i p_{n,i} Σ_j β_j |θ_ij|`.
pub fn power_penalty(tree: &ObliqueTree, x: ArrayView2<'_, f64>, beta: &CostVector) -> Result<f64> {
    check_batch(tree, x, None)?;
    check_beta(tree, beta)?;
    let node_cost = node_costs(tree, beta);
    let fwd = Forward::run(tree, x);
    let n = x.nrows() as f64;
    Ok(fwd.node_probs.rows().into_iter().map(|p| p.iter().zip(&node_cost).map(|(a, b)| a * b).sum::<f64>()).sum::<f64>() / n)
}

/// Regularized objective on a batch. `beta` is required for [`RegMode::Power`].
pub fn objective(
    tree: &ObliqueTree,
    x: ArrayView2<'_, f64>,
    y: &[usize],
    reg: RegMode,
    lambda: f64,
    beta: Option<&CostVector>,
) -> Result<f64> {
    check_batch(tree, x, Some(y))?;
    let fwd = Forward::run(tree, x);
    let omega = tree.leaf_distributions();
    let mut loglik = 0.0;
    for (n, &label) in y.iter().enumerate() {
        let p: f64 = fwd.leaf_probs.row(n).iter().zip(omega.column(label)).map(|(a, b)| a * b).sum();
        loglik += p.max(LIKELIHOOD_FLOOR).ln();
    }
    let penalty = match reg {
        _ if lambda == 0.0 => 0.0,
        RegMode::L2 => l2_penalty(tree),
        RegMode::Power => {
            let beta = beta.ok_or_else(|| ResotError::InvalidArgument("power regularizer needs feature costs".into()))?;
            check_beta(tree, beta)?;
            let cost = node_costs(tree, beta);
            fwd.node_probs.rows().into_iter().map(|p| p.iter().zip(&cost).map(|(a, b)| a * b).sum::<f64>()).sum::<f64>()
                / x.nrows() as f64
        }
    };
    Ok(loglik - lambda * penalty)
}

/// `∂O/∂θ` and `∂O/∂(leaf logits)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub theta: Array2<f64>,
    pub leaf_logits: Array2<f64>,
}

/// `(split coefficients, log-likelihood, penalty, leaf gradient, node visits)` of one chunk.
type ChunkPartial = (Array2<f64>, f64, f64, Array2<f64>, Vec<f64>);

/// Objective value and its exact gradient on a batch.
pub fn gradients(
    tree: &ObliqueTree,
    x: ArrayView2<'_, f64>,
    y: &[usize],
    reg: RegMode,
    lambda: f64,
    beta: Option<&CostVector>,
) -> Result<(f64, Gradients)> {
    check_batch(tree, x, Some(y))?;
    let power = reg == RegMode::Power && lambda != 0.0;
    let node_cost = if power {
        let beta = beta.ok_or_else(|| ResotError::InvalidArgument("power regularizer needs feature costs".into()))?;
        check_beta(tree, beta)?;
        node_costs(tree, beta)
    } else {
        Vec::new()
    };

    let internal = tree.internal_count();
    let leaves = tree.leaf_count();
    let classes = tree.class_count();
    let n = x.nrows();
    let inv_n = 1.0 / n as f64;
    let fwd = Forward::run(tree, x);
    let omega = tree.leaf_distributions();

    // Per-sample split coefficients (one row of `g` per sample) are written
    // independently; leaf gradients and scalars are reduced chunk by chunk in
    // order so results do not depend on thread scheduling.
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<ChunkPartial> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let rows = CHUNK.min(n - c * CHUNK);
            let mut g_chunk = Array2::<f64>::zeros((rows, internal));
            let mut loglik = 0.0;
            let mut penalty = 0.0;
            let mut leaf_grad = Array2::<f64>::zeros((leaves, classes));
            let mut visit = vec![0.0; internal];
            let mut resp = vec![0.0; internal + leaves];
            let mut sub_cost = vec![0.0; internal];
            for (r, mut g_row) in g_chunk.rows_mut().into_iter().enumerate() {
                let row = c * CHUNK + r;
                let label = y[row];
                let split = fwd.split_probs.row(row);
                let leaf_p = fwd.leaf_probs.row(row);
                let node_p = fwd.node_probs.row(row);

                let mut p_total = 0.0;
                for l in 0..leaves {
                    resp[internal + l] = leaf_p[l] * omega[[l, label]];
                    p_total += resp[internal + l];
                }
                loglik += p_total.max(LIKELIHOOD_FLOOR).ln();

                if p_total >= LIKELIHOOD_FLOOR {
                    for l in 0..leaves {
                        let r_l = resp[internal + l] / p_total;
                        resp[internal + l] = r_l;
                        if r_l != 0.0 {
                            for k in 0..classes {
                                let delta = if k == label { 1.0 } else { 0.0 };
                                leaf_grad[[l, k]] += r_l * (delta - omega[[l, k]]);
                            }
                        }
                    }
                    // Subtree responsibility sums, bottom-up.
                    for i in (0..internal).rev() {
                        resp[i] = resp[left_child(i)] + resp[right_child(i)];
                    }
                    for i in 0..internal {
                        let s = split[i];
                        g_row[i] = (1.0 - s) * resp[left_child(i)] - s * resp[right_child(i)];
                    }
                }

                if power {
                    for i in 0..internal {
                        visit[i] = node_p[i];
                        penalty += node_p[i] * node_cost[i];
                    }
                    // S(i) = p_i c_i + S(children): penalty mass below each node.
                    for i in (0..internal).rev() {
                        let below = |child: usize| if child < internal { sub_cost[child] } else { 0.0 };
                        sub_cost[i] = visit[i] * node_cost[i] + below(left_child(i)) + below(right_child(i));
                    }
                    for i in 0..internal {
                        let s = split[i];
                        let below = |child: usize| if child < internal { sub_cost[child] } else { 0.0 };
                        let d_omega = (1.0 - s) * below(left_child(i)) - s * below(right_child(i));
                        g_row[i] -= lambda * inv_n * d_omega;
                    }
                }
            }
            let visit_sum = if power { chunk_visit_sum(&fwd.node_probs, c) } else { Vec::new() };
            (g_chunk, loglik, penalty, leaf_grad, visit_sum)
        })
        .collect();

    let mut loglik = 0.0;
    let mut penalty_sum = 0.0;
    let mut leaf_grad = Array2::<f64>::zeros((leaves, classes));
    let mut visit_total = vec![0.0; internal];
    let mut g = Array2::<f64>::zeros((n, internal));
    for (c, (gc, ll, pen, lg, vs)) in partials.into_iter().enumerate() {
        g.slice_mut(s![c * CHUNK..c * CHUNK + gc.nrows(), ..]).assign(&gc);
        loglik += ll;
        penalty_sum += pen;
        leaf_grad += &lg;
        visit_total.iter_mut().zip(vs).for_each(|(a, b)| *a += b);
    }

    let d = tree.feature_count();
    let mut theta_grad = Array2::<f64>::zeros((internal, d + 1));
    theta_grad.slice_mut(s![.., ..d]).assign(&g.t().dot(&x));
    theta_grad.column_mut(d).assign(&g.sum_axis(Axis(0)));

    let objective = match reg {
        _ if lambda == 0.0 => loglik,
        RegMode::L2 => {
            theta_grad.scaled_add(-2.0 * lambda, tree.theta());
            loglik - lambda * l2_penalty(tree)
        }
        RegMode::Power => {
            let beta = beta.expect("checked above").as_slice();
            for i in 0..internal {
                let q = visit_total[i] * inv_n;
                for j in 0..=d {
                    let w = tree.theta()[[i, j]];
                    if w != 0.0 && beta[j] != 0.0 {
                        theta_grad[[i, j]] -= lambda * q * beta[j] * w.signum();
                    }
                }
            }
            loglik - lambda * penalty_sum * inv_n
        }
    };
    Ok((objective, Gradients { theta: theta_grad, leaf_logits: leaf_grad }))
}

fn chunk_visit_sum(node_probs: &Array2<f64>, chunk: usize) -> Vec<f64> {
    let end = ((chunk + 1) * CHUNK).min(node_probs.nrows());
    node_probs.slice(s![chunk * CHUNK..end, ..]).sum_axis(Axis(0)).to_vec()
}

/// `c_i = Σ_j β_j |θ_ij|`.
fn node_costs(tree: &ObliqueTree, beta: &CostVector) -> Vec<f64> {
    let b = beta.as_slice();
    tree.theta().rows().into_iter().map(|r| r.iter().zip(b).map(|(w, c)| c * w.abs()).sum()).collect()
}

fn check_beta(tree: &ObliqueTree, beta: &CostVector) -> Result<()> {
    if beta.len() != tree.theta().ncols() {
        return Err(ResotError::DimensionMismatch { expected: tree.theta().ncols(), actual: beta.len() });
    }
    Ok(())
}

fn check_batch(tree: &ObliqueTree, x: ArrayView2<'_, f64>, y: Option<&[usize]>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(ResotError::EmptyBatch);
    }
    if x.ncols() != tree.feature_count() {
        return Err(ResotError::DimensionMismatch { expected: tree.feature_count(), actual: x.ncols() });
    }
    if let Some(y) = y {
        if y.len() != x.nrows() {
            return Err(ResotError::DimensionMismatch { expected: x.nrows(), actual: y.len() });
        }
        if let Some(&label) = y.iter().find(|&&l| l >= tree.class_count()) {
            return Err(ResotError::LabelOutOfRange { label, classes: tree.class_count() });
        }
    }
    Ok(())
}

/// Batched soft routing.
pub(crate) struct Forward {
    pub split_probs: Array2<f64>,
    pub node_probs: Array2<f64>,
    pub leaf_probs: Array2<f64>,
}

impl Forward {
    pub fn run(tree: &ObliqueTree, x: ArrayView2<'_, f64>) -> Self {
        let d = tree.feature_count();
        let theta = tree.theta();
        let mut split = x.dot(&theta.slice(s![.., ..d]).t());
        for mut row in split.rows_mut() {
            row.iter_mut().zip(theta.column(d)).for_each(|(a, b)| *a = sigmoid(*a + b));
        }
        let n = x.nrows();
        let mut node_probs = Array2::zeros((n, tree.internal_count()));
        let mut leaf_probs = Array2::zeros((n, tree.leaf_count()));
        for ((s_row, mut p_row), mut l_row) in split.rows().into_iter().zip(node_probs.rows_mut()).zip(leaf_probs.rows_mut()) {
            propagate(
                s_row.as_slice().expect("standard layout"),
                p_row.as_slice_mut().expect("standard layout"),
                l_row.as_slice_mut().expect("standard layout"),
            );
        }
        Self { split_probs: split, node_probs, leaf_probs }
    }
}
