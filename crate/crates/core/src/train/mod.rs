//! Mini-batch Adam training of soft oblique trees.

mod adam;
pub mod objective;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::CostVector;
use crate::data::Dataset;
use crate::error::{ResotError, Result};
use crate::tree::ObliqueTree;

pub use adam::{Adam, AdamConfig};
pub use objective::{gradients, l2_penalty, objective, power_penalty, Gradients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegMode {
    L2,
    Power,
}

impl fmt::Display for RegMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegMode::L2 => "l2",
            RegMode::Power => "power",
        })
    }
}

impl FromStr for RegMode {
    type Err = ResotError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(RegMode::L2),
            "power" | "pe" => Ok(RegMode::Power),
            other => Err(ResotError::InvalidArgument(format!("unknown regularizer `{other}` (expected l2 or power)"))),
        }
    }
}

/// Leaf storage precision in the compact model format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafPrecision {
    F32,
    U8,
}

/// Every knob of the train / prune / share pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub depth: usize,
    pub reg: RegMode,
    /// Penalty magnitude; the objective subtracts `lambda * Ω`.
    pub lambda: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub epochs_per_round: usize,
    pub prune_rounds: usize,
    /// Alive non-bias weights after the last round; `None` disables pruning.
    pub target_nonzeros: Option<usize>,
    /// Codebook index width; 32 keeps raw weights.
    pub share_bits: u8,
    pub finetune_epochs: usize,
    pub delta_bits: u8,
    pub leaf_precision: LeafPrecision,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            reg: RegMode::L2,
            lambda: 0.1,
            batch_size: 128,
            pretrain_epochs: 100,
            epochs_per_round: 100,
            prune_rounds: 0,
            target_nonzeros: None,
            share_bits: 32,
            finetune_epochs: 10,
            delta_bits: 8,
            leaf_precision: LeafPrecision::F32,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ResotError::InvalidArgument(m));
        if !(1..=12).contains(&self.depth) {
            return bad(format!("depth must be in 1..=12, got {}", self.depth));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda is a non-negative magnitude, got {}", self.lambda));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(1..=16).contains(&self.share_bits) && self.share_bits != 32 {
            return bad(format!("share_bits must be in 1..=16 or 32, got {}", self.share_bits));
        }
        if !(1..=16).contains(&self.delta_bits) {
            return bad(format!("delta_bits must be in 1..=16, got {}", self.delta_bits));
        }
        if self.prune_rounds > 0 && self.target_nonzeros.is_none() {
            return bad("prune_rounds > 0 needs target_nonzeros".into());
        }
        self.adam.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| ResotError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn total_epochs(&self) -> usize {
        self.pretrain_epochs + self.prune_rounds * self.epochs_per_round
    }
}

/// Owns a tree plus optimizer state so training can resume across prune rounds.
#[derive(Debug, Clone)]
pub struct Trainer {
    tree: ObliqueTree,
    config: TrainConfig,
    beta: Option<CostVector>,
    theta_opt: Adam,
    leaf_opt: Adam,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(tree: ObliqueTree, config: TrainConfig, beta: Option<CostVector>) -> Result<Self> {
        config.validate()?;
        if config.reg == RegMode::Power && config.lambda > 0.0 && beta.is_none() {
            return Err(ResotError::InvalidArgument("power regularizer needs feature costs".into()));
        }
        if let Some(b) = &beta {
            if b.len() != tree.theta().ncols() {
                return Err(ResotError::DimensionMismatch { expected: tree.theta().ncols(), actual: b.len() });
            }
        }
        let theta_opt = Adam::new(tree.theta().len(), config.adam);
        let leaf_opt = Adam::new(tree.leaf_logits().len(), config.adam);
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005E_ED0F_72EE);
        Ok(Self { tree, config, beta, theta_opt, leaf_opt, rng })
    }

    /// A freshly initialized tree for `data`.
    pub fn init(data: &Dataset, config: TrainConfig, beta: Option<CostVector>) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tree = ObliqueTree::random(config.depth, data.feature_names().to_vec(), data.classes(), &mut rng)?;
        Self::new(tree, config, beta)
    }

    pub fn tree(&self) -> &ObliqueTree {
        &self.tree
    }

    pub fn tree_mut(&mut self) -> &mut ObliqueTree {
        &mut self.tree
    }

    pub fn into_tree(self) -> ObliqueTree {
        self.tree
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn beta(&self) -> Option<&CostVector> {
        self.beta.as_ref()
    }

    /// Full-data objective of the current tree.
    pub fn objective(&self, data: &Dataset) -> Result<f64> {
        objective(&self.tree, data.x().view(), data.y(), self.config.reg, self.config.lambda, self.beta.as_ref())
    }

    /// Runs `epochs` passes of shuffled mini-batches. Entries where `alive` is
    /// false receive no update. Afterwards the tree holds the parameters with
    /// the best full-data objective seen at an epoch boundary (the starting
    /// point included). Returns the objective after each epoch.
    pub fn fit_epochs(&mut self, data: &Dataset, epochs: usize, alive: Option<&Array2<bool>>) -> Result<Vec<f64>> {
        if epochs == 0 {
            return Ok(Vec::new());
        }
        if data.is_empty() {
            return Err(ResotError::EmptyBatch);
        }
        if let Some(mask) = alive {
            if mask.dim() != self.tree.theta().dim() {
                return Err(ResotError::DimensionMismatch { expected: self.tree.theta().len(), actual: mask.len() });
            }
        }
        let theta_mask: Option<Vec<bool>> = alive.map(|m| m.iter().copied().collect());
        let cfg = self.config.clone();
        let mut best = (self.checked_objective(data)?, self.tree.clone());
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            order.shuffle(&mut self.rng);
            for batch in order.chunks(cfg.batch_size) {
                let x = data.x().select(Axis(0), batch);
                let y: Vec<usize> = batch.iter().map(|&i| data.y()[i]).collect();
                let (_, grads) = gradients(&self.tree, x.view(), &y, cfg.reg, cfg.lambda, self.beta.as_ref())?;
                self.apply(&grads, theta_mask.as_deref())?;
            }
            let obj = self.checked_objective(data)?;
            history.push(obj);
            if obj > best.0 {
                best = (obj, self.tree.clone());
            }
        }
        self.tree = best.1;
        Ok(history)
    }

    fn checked_objective(&self, data: &Dataset) -> Result<f64> {
        let o = self.objective(data)?;
        if !o.is_finite() {
            return Err(ResotError::NonFinite("training objective".into()));
        }
        Ok(o)
    }

    fn apply(&mut self, grads: &Gradients, theta_mask: Option<&[bool]>) -> Result<()> {
        let theta = self.tree.theta_mut().as_slice_mut().expect("standard layout");
        self.theta_opt.step(theta, grads.theta.as_slice().expect("standard layout"), theta_mask);
        let leaf = self.tree.leaf_logits_mut().as_slice_mut().expect("standard layout");
        self.leaf_opt.step(leaf, grads.leaf_logits.as_slice().expect("standard layout"), None);
        if self.tree.theta().iter().chain(self.tree.leaf_logits().iter()).any(|v| !v.is_finite()) {
            return Err(ResotError::NonFinite("parameters after update".into()));
        }
        Ok(())
    }
}
