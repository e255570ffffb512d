use super::*;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::signal::TaskProfile;
use crate::train::RegMode;

fn quick_config() -> TrainConfig {
    TrainConfig {
        depth: 2,
        pretrain_epochs: 15,
        epochs_per_round: 5,
        prune_rounds: 1,
        target_nonzeros: Some(4),
        share_bits: 3,
        finetune_epochs: 2,
        batch_size: 32,
        ..TrainConfig::default()
    }
}

#[test]
fn power_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let names: Vec<String> = (0..6).map(|j| format!("f{j}")).collect();
    let mut tree = ObliqueTree::random(3, names.clone(), 2, &mut rng).unwrap();
    tree.theta_mut().mapv_inplace(|w| if rng.random_bool(0.4) { 0.0 } else { w });
    let costs: Vec<f64> = (0..6).map(|_| rng.random_range(0.5..40.0)).collect();
    let beta = CostVector::from_costs(&costs).unwrap();
    let x = Array2::from_shape_fn((50, 6), |_| rng.random_range(-2.0..2.0));
    let ds = Dataset::new(x, vec![0; 50], names, 2).unwrap();

    let mut expected = 0.0;
    for n in 0..50 {
        // Walk the tree by sign and add every used feature's cost.
        let mut node = 0;
        while node < tree.internal_count() {
            let row = tree.theta_row(node);
            let logit: f64 = (0..6).map(|j| row[j] * ds.row(n)[j]).sum::<f64>() + row[6];
            for j in 0..6 {
                if row[j] != 0.0 {
                    expected += costs[j];
                }
            }
            node = if logit >= 0.0 { 2 * node + 1 } else { 2 * node + 2 };
        }
    }
    expected /= 50.0;
    assert!((mean_power(&tree, &ds, &beta).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn single_fold_run_is_populated() {
    let ds = two_moons(120, 0.1, 1).unwrap();
    let report = benchmark(&ds, &quick_config(), None, &BlockSplit::whole(ds.len()), BenchOptions::default()).unwrap();
    assert_eq!(report.folds.len(), 1);
    let f = &report.folds[0];
    assert_eq!((f.n_train, f.n_test), (120, 120));
    assert!(f.size_bytes > 24 && f.power > 0.0 && f.params_single > 0.0);
    assert!(f.metrics.accuracy > 0.5);
    assert_eq!(report.std, Summary::default());
    assert_eq!(report.curves.len(), 1);
}

#[test]
fn reports_are_reproducible() {
    let ds = two_moons(100, 0.2, 2).unwrap();
    let split = block_split(ds.len(), 4, &SplitMode::Blocks).unwrap();
    let run = || {
        let r = benchmark(&ds, &quick_config(), None, &split, BenchOptions::default()).unwrap();
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        (r, csv)
    };
    let (a, csv_a) = run();
    let (b, csv_b) = run();
    assert_eq!(a, b);
    assert_eq!(csv_a, csv_b);
}

#[test]
fn csv_schema_and_sample_std() {
    let ds = two_moons(90, 0.2, 3).unwrap();
    let split = block_split(ds.len(), 3, &SplitMode::Blocks).unwrap();
    let r = benchmark(&ds, &quick_config(), None, &split, BenchOptions::default()).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER.to_vec());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(&rows[3][0], "mean");
    assert_eq!(&rows[4][0], "std");
    let acc: Vec<f64> = r.folds.iter().map(|f| f.metrics.accuracy).collect();
    let m = acc.iter().sum::<f64>() / 3.0;
    let sd = (acc.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 2.0).sqrt();
    assert!((r.std.accuracy - sd).abs() < 1e-12);
    assert!(r.render_text().contains("n-1"));
    for f in &r.folds {
        let m = f.metrics;
        assert!([m.accuracy, m.f1, m.sensitivity, m.specificity].iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn split_must_cover_the_dataset() {
    let ds = two_moons(50, 0.1, 0).unwrap();
    let split = block_split(40, 4, &SplitMode::Blocks).unwrap();
    assert!(benchmark(&ds, &quick_config(), None, &split, BenchOptions::default()).is_err());
}

#[test]
fn synthetic_parkinson_is_learnable() {
    let ds = synth_neural(&SynthConfig::new(TaskProfile::Parkinson, 200, 4)).unwrap();
    let split = block_split(ds.len(), 2, &SplitMode::Blocks).unwrap();
    let config = TrainConfig { reg: RegMode::L2, lambda: 0.01, ..quick_config() };
    let r = benchmark(&ds, &config, None, &split, BenchOptions::default()).unwrap();
    assert!(r.mean.f1 > 0.7, "{}", r.render_text());
}
