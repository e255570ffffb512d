//! Iterative magnitude pruning, weight sharing and the full
//! train / prune / retrain / share pipeline.

mod log;
mod share;

use ndarray::Array2;

use crate::cost::CostVector;
use crate::data::Dataset;
use crate::error::{ResotError, Result};
use crate::train::{TrainConfig, Trainer};
use crate::tree::ObliqueTree;

pub use self::log::{LogRow, TrainingLog};
pub use share::{codebook_gradient, finetune_shared, share_weights, share_weights_reserving, SharedWeights};

/// Which entries of `theta` are alive. The bias column is always alive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    alive: Array2<bool>,
}

impl PruneMask {
    /// Everything alive.
    pub fn dense(tree: &ObliqueTree) -> Self {
        Self { alive: Array2::from_elem(tree.theta().dim(), true) }
    }

    /// Alive exactly where the tree has a nonzero weight (and in the bias column).
    pub fn from_support(tree: &ObliqueTree) -> Self {
        let bias = tree.bias_column();
        let alive = Array2::from_shape_fn(tree.theta().dim(), |(i, j)| j == bias || tree.theta()[[i, j]] != 0.0);
        Self { alive }
    }

    pub fn from_array(alive: Array2<bool>) -> Result<Self> {
        if alive.ncols() == 0 {
            return Err(ResotError::InvalidArgument("mask has no columns".into()));
        }
        let bias = alive.ncols() - 1;
        if alive.column(bias).iter().any(|a| !a) {
            return Err(ResotError::InvalidArgument("bias column must stay alive".into()));
        }
        Ok(Self { alive })
    }

    pub fn alive(&self) -> &Array2<bool> {
        &self.alive
    }

    pub fn is_alive(&self, node: usize, column: usize) -> bool {
        self.alive[[node, column]]
    }

    /// Alive non-bias weights.
    pub fn alive_count(&self) -> usize {
        let bias = self.alive.ncols() - 1;
        self.alive.indexed_iter().filter(|((_, j), a)| **a && *j != bias).count()
    }

    /// Alive non-bias positions in column-first order: by column, then by node.
    pub fn column_first(&self) -> Vec<(usize, usize)> {
        let (rows, cols) = self.alive.dim();
        (0..cols - 1).flat_map(|j| (0..rows).map(move |i| (i, j))).filter(|&(i, j)| self.alive[[i, j]]).collect()
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &PruneMask) -> bool {
        self.alive.dim() == other.alive.dim() && self.alive.iter().zip(other.alive.iter()).all(|(a, b)| !a || *b)
    }

    fn check(&self, tree: &ObliqueTree) -> Result<()> {
        if self.alive.dim() != tree.theta().dim() {
            return Err(ResotError::DimensionMismatch { expected: tree.theta().len(), actual: self.alive.len() });
        }
        Ok(())
    }
}

/// Keeps the `target` largest-magnitude alive non-bias weights, zeroing the
/// rest. Equal magnitudes are kept in (node, column) order.
pub fn prune(tree: &ObliqueTree, mask: &PruneMask, target: usize) -> Result<(ObliqueTree, PruneMask)> {
    mask.check(tree)?;
    let alive = mask.alive_count();
    if target > alive {
        return Err(ResotError::InvalidArgument(format!("cannot keep {target} weights, only {alive} alive")));
    }
    if target < tree.depth() {
        ::log::warn!("pruning to {target} weights leaves some nodes with bias-only splits");
    }
    let bias = tree.bias_column();
    let mut candidates: Vec<(usize, usize)> =
        mask.alive.indexed_iter().filter(|((_, j), a)| **a && *j != bias).map(|(ij, _)| ij).collect();
    // Stable sort keeps row-major (node, column) order among ties.
    candidates.sort_by(|a, b| tree.theta()[[b.0, b.1]].abs().total_cmp(&tree.theta()[[a.0, a.1]].abs()));
    let mut out_mask = mask.clone();
    let mut out_tree = tree.clone();
    for &(i, j) in &candidates[target..] {
        out_mask.alive[[i, j]] = false;
    }
    for ((i, j), w) in out_tree.theta_mut().indexed_iter_mut() {
        if !out_mask.alive[[i, j]] {
            *w = 0.0;
        }
    }
    Ok((out_tree, out_mask))
}

/// Alive counts per round, decaying geometrically from `start` to `target`.
pub fn geometric_schedule(start: usize, target: usize, rounds: usize) -> Vec<usize> {
    if rounds == 0 {
        return Vec::new();
    }
    let ratio = target as f64 / start as f64;
    (1..=rounds)
        .map(|r| {
            if r == rounds {
                target
            } else {
                ((start as f64 * ratio.powf(r as f64 / rounds as f64)).round() as usize).clamp(target, start)
            }
        })
        .collect()
}

/// Everything [`learn_resot`] produces.
#[derive(Debug, Clone)]
pub struct LearnedModel {
    /// The dense tree before any pruning.
    pub dense: ObliqueTree,
    /// Final tree; alive weights equal their dequantized codebook values when shared.
    pub tree: ObliqueTree,
    pub mask: PruneMask,
    pub shared: Option<SharedWeights>,
    pub log: TrainingLog,
}

/// Pretrain, then for each round prune and retrain, then share and fine-tune.
pub fn learn_resot(data: &Dataset, config: &TrainConfig, beta: Option<&CostVector>) -> Result<LearnedModel> {
    config.validate()?;
    let mut trainer = Trainer::init(data, config.clone(), beta.cloned())?;
    let mut log = TrainingLog::default();
    let history = trainer.fit_epochs(data, config.pretrain_epochs, None)?;
    let mask = PruneMask::dense(trainer.tree());
    log.extend(history, mask.alive_count(), "pretrain");
    let dense = trainer.tree().clone();
    finish(trainer, mask, dense, log, data, beta)
}

/// The prune / retrain / share stages applied to an already trained tree.
/// `mask` marks the weights still alive; the tree must be zero elsewhere.
pub fn compress_model(
    tree: ObliqueTree,
    mask: PruneMask,
    data: &Dataset,
    config: &TrainConfig,
    beta: Option<&CostVector>,
) -> Result<LearnedModel> {
    config.validate()?;
    mask.check(&tree)?;
    if tree.theta().indexed_iter().any(|((i, j), w)| *w != 0.0 && !mask.is_alive(i, j)) {
        return Err(ResotError::InvalidArgument("tree has weights outside the mask".into()));
    }
    let dense = tree.clone();
    let trainer = Trainer::new(tree, config.clone(), beta.cloned())?;
    finish(trainer, mask, dense, TrainingLog::default(), data, beta)
}

fn finish(
    mut trainer: Trainer,
    mut mask: PruneMask,
    dense: ObliqueTree,
    mut log: TrainingLog,
    data: &Dataset,
    beta: Option<&CostVector>,
) -> Result<LearnedModel> {
    let config = trainer.config().clone();
    if let Some(target) = config.target_nonzeros {
        let rounds = config.prune_rounds.max(1);
        let start = mask.alive_count();
        for (r, round_target) in geometric_schedule(start, target.min(start), rounds).into_iter().enumerate() {
            let (pruned, next) = prune(trainer.tree(), &mask, round_target)?;
            mask = next;
            *trainer.tree_mut() = pruned;
            ::log::info!("round {}: {} weights alive", r + 1, mask.alive_count());
            let history = trainer.fit_epochs(data, config.epochs_per_round, Some(mask.alive()))?;
            log.extend(history, mask.alive_count(), &format!("prune{}", r + 1));
        }
    }

    let mut tree = trainer.into_tree();
    let shared = if config.share_bits == 32 || mask.alive_count() == 0 {
        round_to_f32(&mut tree);
        None
    } else {
        let reserve = crate::model_io::needs_filler(&mask, config.delta_bits);
        let initial = share_weights_reserving(&tree, &mask, config.share_bits, reserve)?;
        let (tuned, history) = finetune_shared(&tree, &mask, &initial, data, &config, beta)?;
        log.extend(history, mask.alive_count(), "finetune");
        tree = tuned.apply(&tree, &mask)?;
        round_to_f32(&mut tree);
        Some(tuned)
    };
    Ok(LearnedModel { dense, tree, mask, shared, log })
}

/// Rounds every parameter to the nearest `f32`, as stored on disk.
pub fn round_to_f32(tree: &mut ObliqueTree) {
    tree.theta_mut().mapv_inplace(|v| v as f32 as f64);
    tree.leaf_logits_mut().mapv_inplace(|v| v as f32 as f64);
}

#[cfg(test)]
mod tests;
