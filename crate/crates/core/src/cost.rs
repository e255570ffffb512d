//! Normalized per-feature power costs and per-inference cost accounting.
//!
//! Costs are relative to line-length (= 1). Feature names are `KIND@chN`; the
//! table is keyed by kind so one entry covers every channel.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ResotError, Result};
use crate::signal::profile::feature_kind;
use crate::signal::TaskProfile;
use crate::tree::{left_child, right_child, ObliqueTree};

/// Cost of one FIR band-power channel.
pub const BAND_POWER_COST: f64 = 34.07;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureCostTable {
    entries: BTreeMap<String, f64>,
}

impl FeatureCostTable {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let entries: BTreeMap<String, f64> = entries.into_iter().collect();
        for (kind, cost) in &entries {
            if !(cost.is_finite() && *cost > 0.0) {
                return Err(ResotError::InvalidArgument(format!("cost of `{kind}` must be positive, got {cost}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, kind: &str) -> Option<f64> {
        self.entries.get(kind).copied()
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }

    /// Replaces or adds entries from a TOML table of `kind = cost`.
    pub fn with_overrides_toml(mut self, text: &str) -> Result<Self> {
        let overrides: BTreeMap<String, f64> = toml::from_str(text).map_err(|e| ResotError::Parse(e.to_string()))?;
        let merged = FeatureCostTable::new(overrides)?;
        self.entries.extend(merged.entries);
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.entries).expect("string keys and float values serialize")
    }
}

/// Table costs for a profile's feature kinds.
pub fn default_costs(profile: TaskProfile) -> FeatureCostTable {
    let band = BAND_POWER_COST;
    let pairs: &[(&str, f64)] = match profile {
        TaskProfile::Epilepsy => &[
            ("LLN", 1.0),
            ("Pow", 1.87),
            ("Var", 2.93),
            ("Delta", band),
            ("Theta", band),
            ("Alpha", band),
            ("Beta", band),
            ("LowGamma", band),
            ("Gamma", band),
            ("HighGamma", band),
            ("Ripple", band),
            ("FastRipple", band),
        ],
        TaskProfile::Parkinson => &[
            ("LowBeta", band),
            ("HighBeta", band),
            ("LowGamma", band),
            ("Gamma", band),
            ("HighGamma", band),
            ("LowHFO", band),
            ("HighHFO", band),
            ("HFORatio", 68.15),
            ("TPow", band),
            ("Act", 2.93),
            ("Mob", 6.26),
            ("Com", 9.62),
        ],
        TaskProfile::Finger => &[
            ("Alpha", band),
            ("Beta", band),
            ("LowGamma", band),
            ("Gamma", band),
            ("HighGamma", band),
            ("LMP", 0.50),
            ("Act", 2.93),
            ("Mob", 6.26),
            ("Com", 9.62),
        ],
    };
    FeatureCostTable::new(pairs.iter().map(|(k, c)| (k.to_string(), *c))).expect("table costs are positive")
}

/// `β`, aligned with a feature ordering plus a trailing zero-cost bias slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostVector {
    beta: Vec<f64>,
}

impl CostVector {
    /// All features cost 1 (bias still 0).
    pub fn uniform(features: usize) -> Self {
        let mut beta = vec![1.0; features + 1];
        beta[features] = 0.0;
        Self { beta }
    }

    pub fn from_costs(costs: &[f64]) -> Result<Self> {
        if costs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(ResotError::InvalidArgument("feature costs must be positive".into()));
        }
        let mut beta = costs.to_vec();
        beta.push(0.0);
        Ok(Self { beta })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.beta
    }

    /// Length including the bias slot.
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

pub fn cost_vector(table: &FeatureCostTable, names: &[String]) -> Result<CostVector> {
    let mut beta = Vec::with_capacity(names.len() + 1);
    for name in names {
        let kind = feature_kind(name);
        beta.push(table.get(kind).ok_or_else(|| ResotError::UnknownFeature(kind.to_string()))?);
    }
    beta.push(0.0);
    Ok(CostVector { beta })
}

fn check_path(tree: &ObliqueTree, path: &[usize], beta: &CostVector) -> Result<()> {
    if beta.len() != tree.theta().ncols() {
        return Err(ResotError::DimensionMismatch { expected: tree.theta().ncols(), actual: beta.len() });
    }
    if path.len() != tree.depth() || path.first() != Some(&0) {
        return Err(ResotError::InvalidPath(format!("{path:?} is not a root-to-leaf path of depth {}", tree.depth())));
    }
    for pair in path.windows(2) {
        if pair[1] != left_child(pair[0]) && pair[1] != right_child(pair[0]) {
            return Err(ResotError::InvalidPath(format!("{} is not a child of {}", pair[1], pair[0])));
        }
    }
    Ok(())
}

/// `Σ_{i ∈ path} Σ_j β_j · 1[θ_ij ≠ 0]`, counting a feature once per node that uses it.
pub fn path_cost(tree: &ObliqueTree, path: &[usize], beta: &CostVector) -> Result<f64> {
    check_path(tree, path, beta)?;
    let b = beta.as_slice();
    Ok(path
        .iter()
        .map(|&i| tree.theta().row(i).iter().zip(b).filter(|(w, _)| **w != 0.0).map(|(_, c)| c).sum::<f64>())
        .sum())
}

/// Like [`path_cost`] but a feature used at several nodes is paid for once.
pub fn path_cost_dedup(tree: &ObliqueTree, path: &[usize], beta: &CostVector) -> Result<f64> {
    check_path(tree, path, beta)?;
    let b = beta.as_slice();
    let mut used = vec![false; b.len()];
    for &i in path {
        for (u, w) in used.iter_mut().zip(tree.theta().row(i)) {
            *u |= *w != 0.0;
        }
    }
    Ok(used.iter().zip(b).filter(|(u, _)| **u).map(|(_, c)| c).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::descend;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn table_values() {
        assert_eq!(default_costs(TaskProfile::Epilepsy).get("LLN"), Some(1.0));
        assert_eq!(default_costs(TaskProfile::Parkinson).get("HFORatio"), Some(68.15));
        assert_eq!(default_costs(TaskProfile::Finger).get("LMP"), Some(0.50));
        assert_eq!(default_costs(TaskProfile::Epilepsy).get("Pow"), Some(1.87));
        assert_eq!(default_costs(TaskProfile::Parkinson).get("TPow"), Some(34.07));
        assert_eq!(default_costs(TaskProfile::Parkinson).get("Com"), Some(9.62));
    }

    #[test]
    fn every_profile_feature_has_a_cost() {
        for p in TaskProfile::ALL {
            let fs = if p == TaskProfile::Epilepsy { 5000.0 } else { p.default_sample_rate() };
            let n = p.feature_names(fs, 3);
            assert_eq!(cost_vector(&default_costs(p), &n).unwrap().len(), n.len() + 1);
        }
    }

    #[test]
    fn cost_vector_examples() {
        let t = default_costs(TaskProfile::Epilepsy);
        assert_eq!(cost_vector(&t, &names(&["LLN@ch0"])).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(cost_vector(&t, &[]).unwrap().as_slice(), &[0.0]);
        let pk = TaskProfile::Parkinson.feature_names(2048.0, 3);
        assert_eq!(cost_vector(&default_costs(TaskProfile::Parkinson), &pk).unwrap().len(), 37);
        assert!(matches!(cost_vector(&t, &names(&["Mob@ch0"])), Err(ResotError::UnknownFeature(_))));
    }

    #[test]
    fn overrides_from_toml() {
        let t = default_costs(TaskProfile::Epilepsy).with_overrides_toml("LLN = 2.5\nNew = 3.0\n").unwrap();
        assert_eq!(t.get("LLN"), Some(2.5));
        assert_eq!(t.get("New"), Some(3.0));
        assert_eq!(t.get("Pow"), Some(1.87));
        assert!(default_costs(TaskProfile::Epilepsy).with_overrides_toml("LLN = -1.0").is_err());
        let back = FeatureCostTable::new(toml::from_str::<BTreeMap<String, f64>>(&t.to_toml()).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn single_node_lln_and_pow() {
        let n = names(&["LLN@ch0", "Pow@ch0", "Var@ch0"]);
        let beta = cost_vector(&default_costs(TaskProfile::Epilepsy), &n).unwrap();
        let theta = Array2::from_shape_vec((1, 4), vec![0.3, -1.2, 0.0, 0.7]).unwrap();
        let tree = ObliqueTree::from_parts(1, theta, Array2::zeros((2, 2)), n).unwrap();
        assert!((path_cost(&tree, &[0], &beta).unwrap() - 2.87).abs() < 1e-12);
    }

    #[test]
    fn zero_and_bias_only_trees_cost_nothing() {
        let mut tree = ObliqueTree::zeros(3, names(&["a", "b"]), 2).unwrap();
        let beta = CostVector::from_costs(&[5.0, 7.0]).unwrap();
        assert_eq!(path_cost(&tree, &[0, 1, 3], &beta).unwrap(), 0.0);
        tree.theta_mut().column_mut(2).fill(1.3);
        assert_eq!(path_cost(&tree, &[0, 2, 6], &beta).unwrap(), 0.0);
    }

    #[test]
    fn invalid_paths() {
        let tree = ObliqueTree::zeros(3, names(&["a"]), 2).unwrap();
        let beta = CostVector::uniform(1);
        assert!(path_cost(&tree, &[0, 1], &beta).is_err());
        assert!(path_cost(&tree, &[0, 1, 5], &beta).is_err());
        assert!(path_cost(&tree, &[1, 3, 7], &beta).is_err());
        assert!(path_cost(&tree, &[0, 1, 3], &CostVector::uniform(2)).is_err());
    }

    fn sparse_tree(rng: &mut ChaCha8Rng, depth: usize, d: usize) -> ObliqueTree {
        let internal = (1 << depth) - 1;
        let theta = Array2::from_shape_fn((internal, d + 1), |_| {
            if rng.random_bool(0.4) { rng.random_range(-1.0..1.0) } else { 0.0 }
        });
        let n = (0..d).map(|j| format!("f{j}")).collect();
        ObliqueTree::from_parts(depth, theta, Array2::zeros((1 << depth, 2)), n).unwrap()
    }

    #[test]
    fn matches_double_loop_oracle_and_dedup_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let depth = rng.random_range(1..5);
            let d = rng.random_range(1..8);
            let tree = sparse_tree(&mut rng, depth, d);
            let costs: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..50.0)).collect();
            let beta = CostVector::from_costs(&costs).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (path, _) = descend(&tree, &x);
            let mut oracle = 0.0;
            for &i in &path {
                for j in 0..d {
                    let c = if tree.theta()[[i, j]] != 0.0 { 1.0 } else { 0.0 };
                    oracle += costs[j] * c;
                }
            }
            let got = path_cost(&tree, &path, &beta).unwrap();
            assert!((got - oracle).abs() <= 1e-12);
            assert!(path_cost_dedup(&tree, &path, &beta).unwrap() <= got + 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn adding_support_never_lowers_cost(seed in 0u64..1000, node_pick in 0usize..3, col in 0usize..4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let tree = sparse_tree(&mut rng, 3, 4);
                let beta = CostVector::from_costs(&[1.0, 2.0, 34.07, 0.5]).unwrap();
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let (path, _) = descend(&tree, &x);
                let before = path_cost(&tree, &path, &beta).unwrap();
                let mut grown = tree.clone();
                let node = path[node_pick];
                if grown.theta()[[node, col]] == 0.0 {
                    grown.theta_mut()[[node, col]] = 0.25;
                }
                prop_assert!(path_cost(&grown, &path, &beta).unwrap() >= before);
            }
        }
    }
}
