use super::*;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::eval::{predict_labels, two_moons};
use crate::model_io::{CompressedModel, StorageOptions};
use crate::train::{gradients, objective, RegMode};

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}

fn tree_with_row(row: &[f64]) -> ObliqueTree {
    let theta = Array2::from_shape_vec((1, row.len()), row.to_vec()).unwrap();
    ObliqueTree::from_parts(1, theta, Array2::zeros((2, 2)), names(row.len() - 1)).unwrap()
}

#[test]
fn prune_keeps_largest_magnitude() {
    let t = tree_with_row(&[1.0, -5.0, 0.1, 0.7]);
    let (p, mask) = prune(&t, &PruneMask::dense(&t), 1).unwrap();
    assert_eq!(p.theta().row(0).to_vec(), vec![0.0, -5.0, 0.0, 0.7]);
    assert_eq!(mask.alive_count(), 1);
    assert!(mask.is_alive(0, 3));
}

#[test]
fn prune_to_alive_count_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = ObliqueTree::random(3, names(5), 3, &mut rng).unwrap();
    let mask = PruneMask::dense(&t);
    let (p, m) = prune(&t, &mask, mask.alive_count()).unwrap();
    assert_eq!(p, t);
    assert_eq!(m, mask);
    assert!(prune(&t, &mask, mask.alive_count() + 1).is_err());
}

#[test]
fn prune_ties_keep_earlier_entries() {
    let t = tree_with_row(&[2.0, -2.0, 2.0, 0.0]);
    let (p, _) = prune(&t, &PruneMask::dense(&t), 2).unwrap();
    assert_eq!(p.theta().row(0).to_vec(), vec![2.0, -2.0, 0.0, 0.0]);
}

#[test]
fn geometric_schedule_shape() {
    assert_eq!(geometric_schedule(1000, 10, 2), vec![100, 10]);
    assert_eq!(geometric_schedule(11775, 2048, 4).last(), Some(&2048));
    let s = geometric_schedule(11775, 2048, 4);
    assert!(s.windows(2).all(|w| w[0] > w[1]));
    assert!(geometric_schedule(5, 5, 0).is_empty());
}

#[test]
fn two_values_one_bit() {
    let t = tree_with_row(&[-1.0, 1.0, 0.3]);
    let s = share_weights(&t, &PruneMask::dense(&t), 1).unwrap();
    assert_eq!(s.codebook, vec![-1.0, 1.0]);
    assert_eq!(s.codes, vec![0, 1]);
}

#[test]
fn sixteen_value_grid_is_lossless() {
    let grid: Vec<f64> = (0..16).map(|i| -1.0 + i as f64 * 0.125).collect();
    let mut row = grid.clone();
    row.push(0.0);
    let t = tree_with_row(&row);
    let mask = PruneMask::dense(&t);
    let s = share_weights(&t, &mask, 4).unwrap();
    let back = s.apply(&t, &mask).unwrap();
    assert_eq!(back.theta(), t.theta());
    assert_eq!(s.distinct_values(), 16);
}

#[test]
fn gaussian_quantization_error_within_bin_width() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut t = ObliqueTree::zeros(4, names(40), 3).unwrap();
    t.theta_mut().mapv_inplace(|_| rng.sample(StandardNormal));
    let mask = PruneMask::dense(&t);
    let s = share_weights(&t, &mask, 4).unwrap();
    let back = s.apply(&t, &mask).unwrap();
    let alive: Vec<f64> = mask.column_first().iter().map(|&(i, j)| t.theta()[[i, j]]).collect();
    let lo = alive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = alive.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / 16.0;
    for &(i, j) in &mask.column_first() {
        assert!((t.theta()[[i, j]] - back.theta()[[i, j]]).abs() <= width);
    }
    assert!(s.distinct_values() <= 16);
    // Bias column is not shared.
    assert_eq!(back.theta().column(40), t.theta().column(40));
}

#[test]
fn empty_bins_sit_at_their_centre() {
    let t = tree_with_row(&[0.0, 0.1, 4.0, 0.0]);
    let s = share_weights(&t, &PruneMask::dense(&t), 2).unwrap();
    assert_eq!(s.used, vec![true, false, false, true]);
    assert_eq!(s.codebook[1], 1.5);
    assert_eq!(s.codebook[2], 2.5);
}

#[test]
fn reserved_filler_slot_is_unused() {
    let t = tree_with_row(&[-1.0, 0.0, 1.0, 0.5, 0.0]);
    let s = share_weights_reserving(&t, &PruneMask::dense(&t), 2, true).unwrap();
    assert_eq!(s.filler_code(), Some(3));
    assert!(s.codes.iter().all(|&c| c < 3));
    assert!(!s.used[3]);
}

fn small_problem(seed: u64) -> (ObliqueTree, PruneMask, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = ObliqueTree::random(3, names(4), 3, &mut rng).unwrap();
    let (t, mask) = prune(&t, &PruneMask::dense(&t), 14).unwrap();
    let x = Array2::from_shape_fn((60, 4), |_| rng.random_range(-2.0..2.0));
    let y = (0..60).map(|_| rng.random_range(0..3)).collect();
    (t, mask, Dataset::new(x, y, names(4), 3).unwrap())
}

#[test]
fn codebook_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let (t, mask, ds) = small_problem(seed);
        let shared = share_weights(&t, &mask, 2).unwrap();
        let base = shared.apply(&t, &mask).unwrap();
        for reg in [RegMode::L2, RegMode::Power] {
            let beta = crate::cost::CostVector::from_costs(&[1.0, 2.0, 3.0, 4.0]).unwrap();
            let (_, g) = gradients(&base, ds.x().view(), ds.y(), reg, 0.1, Some(&beta)).unwrap();
            let analytic = codebook_gradient(&g.theta, &mask, &shared);
            for k in 0..shared.k() {
                if !shared.used[k] {
                    assert_eq!(analytic[k], 0.0);
                    continue;
                }
                let h = 1e-5;
                let f = |delta: f64| {
                    let mut t2 = base.clone();
                    for (&(i, j), &c) in mask.column_first().iter().zip(&shared.codes) {
                        if c as usize == k {
                            t2.theta_mut()[[i, j]] = shared.codebook[k] as f64 + delta;
                        }
                    }
                    objective(&t2, ds.x().view(), ds.y(), reg, 0.1, Some(&beta)).unwrap()
                };
                let fd = (f(h) - f(-h)) / (2.0 * h);
                let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(1e-5);
                assert!(rel <= 1e-4, "seed {seed} {reg} entry {k}: {} vs {fd}", analytic[k]);
            }
        }
    }
}

#[test]
fn one_weight_per_entry_is_plain_gradient() {
    let t = tree_with_row(&[0.4, -0.3, 0.9, 0.1]);
    let mask = PruneMask::dense(&t);
    let s = share_weights(&t, &mask, 2).unwrap();
    assert_eq!(s.codes.len(), 3);
    let mut distinct = s.codes.clone();
    distinct.dedup();
    assert_eq!(distinct.len(), 3);
    let g = array![[1.5, -2.0, 0.25, 9.0]];
    let cg = codebook_gradient(&g, &mask, &s);
    for (n, &c) in s.codes.iter().enumerate() {
        assert_eq!(cg[c as usize], g[[0, n]]);
    }
}

#[test]
fn finetune_never_lowers_the_objective() {
    let (t, mask, ds) = small_problem(3);
    let shared = share_weights(&t, &mask, 3).unwrap();
    let config = TrainConfig { depth: 3, finetune_epochs: 5, batch_size: 16, lambda: 0.05, ..TrainConfig::default() };
    let before = objective(&shared.apply(&t, &mask).unwrap(), ds.x().view(), ds.y(), config.reg, config.lambda, None).unwrap();
    let (tuned, history) = finetune_shared(&t, &mask, &shared, &ds, &config, None).unwrap();
    let after = objective(&tuned.apply(&t, &mask).unwrap(), ds.x().view(), ds.y(), config.reg, config.lambda, None).unwrap();
    assert_eq!(history.len(), 5);
    assert!(after >= before);
    assert_eq!(tuned.codes, shared.codes);
    for k in 0..tuned.k() {
        if !shared.used[k] {
            assert_eq!(tuned.codebook[k], shared.codebook[k]);
        }
    }
}

#[test]
fn degenerate_pipeline_is_plain_training() {
    let ds = two_moons(80, 0.1, 5).unwrap();
    let config = TrainConfig { depth: 2, pretrain_epochs: 7, share_bits: 32, ..TrainConfig::default() };
    let learned = learn_resot(&ds, &config, None).unwrap();
    let mut trainer = crate::train::Trainer::init(&ds, config.clone(), None).unwrap();
    trainer.fit_epochs(&ds, 7, None).unwrap();
    let mut plain = trainer.into_tree();
    round_to_f32(&mut plain);
    assert_eq!(learned.tree, plain);
    assert!(learned.shared.is_none());
    assert_eq!(learned.mask, PruneMask::dense(&plain));
    assert_eq!(learned.log.rows().len(), 7);
}

fn moons_config() -> TrainConfig {
    TrainConfig {
        depth: 3,
        lambda: 0.01,
        batch_size: 32,
        adam: crate::train::AdamConfig { step: 0.05, ..Default::default() },
        pretrain_epochs: 60,
        epochs_per_round: 30,
        prune_rounds: 2,
        target_nonzeros: Some(7),
        share_bits: 4,
        finetune_epochs: 10,
        ..TrainConfig::default()
    }
}

fn accuracy(tree: &ObliqueTree, ds: &Dataset) -> f64 {
    let p = predict_labels(tree, ds);
    p.iter().zip(ds.y()).filter(|(a, b)| a == b).count() as f64 / ds.len() as f64
}

#[test]
fn two_moons_compressed_close_to_dense() {
    let train = two_moons(400, 0.15, 1).unwrap();
    let test = two_moons(400, 0.15, 2).unwrap();
    let learned = learn_resot(&train, &moons_config(), None).unwrap();
    let dense = accuracy(&learned.dense, &test);
    let compressed = accuracy(&learned.tree, &test);
    assert!(dense > 0.9, "dense accuracy {dense}");
    assert!(compressed >= dense - 0.02, "dense {dense} compressed {compressed}");
    assert_eq!(learned.mask.alive_count(), 7);
    assert!(learned.shared.as_ref().unwrap().distinct_values() <= 16);
}

#[test]
fn pipeline_log_and_mask_invariants() {
    let ds = two_moons(200, 0.15, 3).unwrap();
    let config = moons_config();
    let learned = learn_resot(&ds, &config, None).unwrap();
    let rows = learned.log.rows();
    assert_eq!(rows.len(), 60 + 2 * 30 + 10);
    let phases: Vec<&str> = rows.iter().map(|r| r.phase.as_str()).collect();
    assert_eq!(phases[0], "pretrain");
    assert_eq!(phases[60], "prune1");
    assert_eq!(phases[90], "prune2");
    assert_eq!(phases[120], "finetune");
    assert!(rows.windows(2).all(|w| w[1].alive_count <= w[0].alive_count));
    assert!(rows.iter().enumerate().all(|(i, r)| r.epoch == i + 1));
    for ((i, j), &w) in learned.tree.theta().indexed_iter() {
        if !learned.mask.is_alive(i, j) {
            assert_eq!(w, 0.0);
        }
    }
    let mut csv = Vec::new();
    learned.log.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("epoch,objective,alive_count,phase\n"));
}

#[test]
fn size_ordering_dense_pruned_shared() {
    let (ds, _) = crate::eval::synth_redundant(300, 10, 4).unwrap();
    let config = TrainConfig { depth: 4, target_nonzeros: Some(100), ..moons_config() };
    let learned = learn_resot(&ds, &config, None).unwrap();
    let opts = StorageOptions::default();
    let dense = CompressedModel::from_tree(&learned.dense, &PruneMask::dense(&learned.dense), None, opts).unwrap();
    let pruned = CompressedModel::from_tree(&learned.tree, &learned.mask, None, opts).unwrap();
    let shared = CompressedModel::from_tree(&learned.tree, &learned.mask, learned.shared.as_ref(), opts).unwrap();
    let sizes: Vec<usize> = [dense, pruned, shared].iter().map(|m| m.encode().unwrap().len()).collect();
    assert!(sizes[0] > sizes[1] && sizes[1] > sizes[2], "{sizes:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn masks_shrink_monotonically(seed in 0u64..10_000, d in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tree = ObliqueTree::random(3, names(d), 2, &mut rng).unwrap();
        let mut mask = PruneMask::dense(&tree);
        let mut target = mask.alive_count();
        while target > 0 {
            target = rng.random_range(0..target);
            let (t, m) = prune(&tree, &mask, target).unwrap();
            prop_assert!(m.is_subset_of(&mask));
            prop_assert_eq!(m.alive_count(), target);
            for ((i, j), &w) in t.theta().indexed_iter() {
                if !m.is_alive(i, j) {
                    prop_assert_eq!(w, 0.0);
                }
            }
            tree = t;
            mask = m;
        }
    }

    #[test]
    fn shared_values_bounded_by_codebook(seed in 0u64..10_000, bits in 1u8..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = ObliqueTree::random(3, names(6), 2, &mut rng).unwrap();
        let mask = PruneMask::dense(&t);
        let s = share_weights(&t, &mask, bits).unwrap();
        let back = s.apply(&t, &mask).unwrap();
        let mut vals: Vec<u64> = mask.column_first().iter().map(|&(i, j)| back.theta()[[i, j]].to_bits()).collect();
        vals.sort_unstable();
        vals.dedup();
        prop_assert!(vals.len() <= 1 << bits);
    }
}

#[test]
fn compressing_a_saved_tree_matches_the_mask_contract() {
    let ds = two_moons(200, 0.15, 6).unwrap();
    let config = TrainConfig { share_bits: 32, target_nonzeros: None, prune_rounds: 0, ..moons_config() };
    let trained = learn_resot(&ds, &config, None).unwrap();
    let later = TrainConfig { pretrain_epochs: 0, ..moons_config() };
    let out = compress_model(trained.tree.clone(), trained.mask.clone(), &ds, &later, None).unwrap();
    assert_eq!(out.mask.alive_count(), 7);
    assert!(out.mask.is_subset_of(&trained.mask));
    assert!(out.shared.is_some());
    assert_eq!(out.log.rows()[0].phase, "prune1");

    let mut stray = trained.tree.clone();
    let (_, small) = prune(&stray, &trained.mask, 3).unwrap();
    stray.theta_mut()[[0, 0]] = 1.0;
    let small = PruneMask::from_array(Array2::from_shape_fn(small.alive().dim(), |(i, j)| small.is_alive(i, j) && (i, j) != (0, 0))).unwrap();
    assert!(compress_model(stray, small, &ds, &later, None).is_err());
}

#[test]
fn empty_log_still_has_a_header() {
    let mut buf = Vec::new();
    TrainingLog::default().write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "epoch,objective,alive_count,phase\n");
}
