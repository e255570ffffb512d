//! Seeded fixtures shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resot_core::compress::{prune, PruneMask};
use resot_core::{Dataset, ObliqueTree};

pub fn names(features: usize) -> Vec<String> {
    (0..features).map(|j| format!("f{j}")).collect()
}

pub fn tree(depth: usize, features: usize, classes: usize, seed: u64) -> ObliqueTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = ObliqueTree::random(depth, names(features), classes, &mut rng).expect("valid shape");
    t.leaf_logits_mut().iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
    t
}

pub fn dataset(n: usize, features: usize, classes: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, features), |_| rng.random_range(-1.0..1.0));
    let y = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Dataset::new(x, y, names(features), classes).expect("consistent shapes")
}

/// A random tree pruned down to `alive` weights, with its mask.
pub fn pruned(depth: usize, features: usize, classes: usize, alive: usize, seed: u64) -> (ObliqueTree, PruneMask) {
    let t = tree(depth, features, classes, seed);
    prune(&t, &PruneMask::dense(&t), alive).expect("target below the weight count")
}
