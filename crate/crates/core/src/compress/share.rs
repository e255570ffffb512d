use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PruneMask;
use crate::cost::CostVector;
use crate::data::Dataset;
use crate::error::{ResotError, Result};
use crate::train::{gradients, objective, Adam, TrainConfig};
use crate::tree::ObliqueTree;

/// A `2^bits`-entry codebook and one code per alive non-bias weight, the
/// codes following [`PruneMask::column_first`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedWeights {
    pub bits: u8,
    pub codebook: Vec<f32>,
    pub codes: Vec<u32>,
    /// `false` for entries no weight maps to.
    pub used: Vec<bool>,
    /// Whether code `k - 1` is held back as a padding marker.
    pub filler_reserved: bool,
}

impl SharedWeights {
    pub fn k(&self) -> usize {
        self.codebook.len()
    }

    pub fn filler_code(&self) -> Option<u32> {
        self.filler_reserved.then(|| self.codebook.len() as u32 - 1)
    }

    /// Alive weights replaced by their codebook values.
    pub fn apply(&self, tree: &ObliqueTree, mask: &PruneMask) -> Result<ObliqueTree> {
        let positions = mask.column_first();
        if positions.len() != self.codes.len() {
            return Err(ResotError::DimensionMismatch { expected: positions.len(), actual: self.codes.len() });
        }
        let mut out = tree.clone();
        for (&(i, j), &c) in positions.iter().zip(&self.codes) {
            out.theta_mut()[[i, j]] = self.codebook[c as usize] as f64;
        }
        Ok(out)
    }

    /// Number of distinct values the codes actually take.
    pub fn distinct_values(&self) -> usize {
        let mut v: Vec<u32> = self.codes.iter().map(|&c| self.codebook[c as usize].to_bits()).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    }
}

/// Equal-width binning of the alive weights into `2^bits` clusters.
pub fn share_weights(tree: &ObliqueTree, mask: &PruneMask, bits: u8) -> Result<SharedWeights> {
    share_weights_reserving(tree, mask, bits, false)
}

/// Like [`share_weights`]; with `reserve_filler` only `2^bits - 1` bins are
/// used and the last code is kept for padding entries.
pub fn share_weights_reserving(tree: &ObliqueTree, mask: &PruneMask, bits: u8, reserve_filler: bool) -> Result<SharedWeights> {
    if !(1..=16).contains(&bits) {
        return Err(ResotError::InvalidArgument(format!("share bits must be in 1..=16, got {bits}")));
    }
    let positions = mask.column_first();
    if positions.is_empty() {
        return Err(ResotError::InvalidArgument("no alive weights to share".into()));
    }
    let k = 1usize << bits;
    let bins = if reserve_filler { k - 1 } else { k };
    if bins == 0 {
        return Err(ResotError::CodebookOverflow { needed: 2, bits });
    }
    let weights: Vec<f64> = positions.iter().map(|&(i, j)| tree.theta()[[i, j]]).collect();
    let lo = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let bin_of = |w: f64| -> usize {
        if width == 0.0 {
            0
        } else {
            (((w - lo) / width) as usize).min(bins - 1)
        }
    };
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    let codes: Vec<u32> = weights
        .iter()
        .map(|&w| {
            let b = bin_of(w);
            sums[b] += w;
            counts[b] += 1;
            b as u32
        })
        .collect();
    let codebook = (0..k)
        .map(|b| {
            if counts[b] > 0 {
                (sums[b] / counts[b] as f64) as f32
            } else if b < bins {
                (lo + (b as f64 + 0.5) * width) as f32
            } else {
                0.0
            }
        })
        .collect();
    let used = counts.iter().map(|&c| c > 0).collect();
    Ok(SharedWeights { bits, codebook, codes, used, filler_reserved: reserve_filler })
}

/// `∂O/∂c_k = Σ_{w: code(w) = k} ∂O/∂w`.
pub fn codebook_gradient(theta_grad: &ndarray::Array2<f64>, mask: &PruneMask, shared: &SharedWeights) -> Vec<f64> {
    let mut g = vec![0.0; shared.k()];
    for (&(i, j), &c) in mask.column_first().iter().zip(&shared.codes) {
        g[c as usize] += theta_grad[[i, j]];
    }
    g
}

/// Adam on the codebook alone, codes fixed, for `config.finetune_epochs`.
/// Keeps the codebook with the best full-data objective (after rounding to
/// `f32`), the starting one included. Returns the codebook and per-epoch
/// objectives.
pub fn finetune_shared(
    tree: &ObliqueTree,
    mask: &PruneMask,
    shared: &SharedWeights,
    data: &Dataset,
    config: &TrainConfig,
    beta: Option<&CostVector>,
) -> Result<(SharedWeights, Vec<f64>)> {
    let full_objective = |s: &SharedWeights| -> Result<f64> {
        let t = s.apply(tree, mask)?;
        let o = objective(&t, data.x().view(), data.y(), config.reg, config.lambda, beta)?;
        if !o.is_finite() {
            return Err(ResotError::NonFinite("fine-tune objective".into()));
        }
        Ok(o)
    };
    let mut best = (full_objective(shared)?, shared.clone());
    let mut current: Vec<f64> = shared.codebook.iter().map(|&c| c as f64).collect();
    let mut adam = Adam::new(current.len(), config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xC0DE_B00C);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.finetune_epochs);
    let mut working = shared.clone();
    for _ in 0..config.finetune_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            working.codebook = current.iter().map(|&c| c as f32).collect();
            let t = apply_f64(tree, mask, &working, &current);
            let x = data.x().select(Axis(0), batch);
            let y: Vec<usize> = batch.iter().map(|&i| data.y()[i]).collect();
            let (_, grads) = gradients(&t, x.view(), &y, config.reg, config.lambda, beta)?;
            let g = codebook_gradient(&grads.theta, mask, &working);
            let frozen: Vec<bool> = working.used.clone();
            adam.step(&mut current, &g, Some(&frozen));
        }
        working.codebook = current.iter().map(|&c| c as f32).collect();
        let o = full_objective(&working)?;
        history.push(o);
        if o > best.0 {
            best = (o, working.clone());
        }
    }
    Ok((best.1, history))
}

fn apply_f64(tree: &ObliqueTree, mask: &PruneMask, shared: &SharedWeights, codebook: &[f64]) -> ObliqueTree {
    let mut out = tree.clone();
    for (&(i, j), &c) in mask.column_first().iter().zip(&shared.codes) {
        out.theta_mut()[[i, j]] = codebook[c as usize];
    }
    out
}
