//! Resource-efficient oblique trees.
//!
//! Soft oblique decision trees trained by gradient ascent on a regularized
//! log-likelihood, compressed by iterative pruning and weight sharing, and
//! evaluated with single-path (comparator-only) inference. A biosignal front
//! end extracts per-channel features whose hardware cost feeds a cost-aware
//! regularizer.
//!
//! ```
//! use resot_core::{ObliqueTree, InferenceMode};
//!
//! let tree = ObliqueTree::zeros(2, vec!["a".into(), "b".into()], 3).unwrap();
//! let p = tree.predict_multipath(&[0.5, -1.0]).unwrap();
//! assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
//! assert_eq!(tree.predict_singlepath(&[0.5, -1.0]).unwrap().leaf, 0);
//! # let _ = InferenceMode::Singlepath;
//! ```

pub mod compress;
pub mod cost;
pub mod data;
pub mod error;
pub mod eval;
pub mod model_io;
pub mod signal;
pub mod train;
pub mod tree;

pub use compress::{learn_resot, prune, share_weights, finetune_shared, PruneMask, SharedWeights, TrainingLog};
pub use cost::{cost_vector, default_costs, path_cost, path_cost_dedup, CostVector, FeatureCostTable};
pub use data::{Dataset, Standardizer};
pub use error::{ResotError, Result};
pub use model_io::{CompressedModel, SizeReport};
pub use signal::{SignalWindow, TaskProfile};
pub use train::{objective, AdamConfig, RegMode, TrainConfig, Trainer};
pub use tree::{InferenceMode, ObliqueTree, RoutingTrace, SinglePath};
