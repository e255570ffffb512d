//! Runs the depth-4 MNIST-scale pipeline on the bundled digits and prints
//! error, size and parameter-use figures.
//!
//! `cargo run --release -p resot-core --example mnist`

use std::path::Path;
use std::time::Instant;

use resot_core::compress::learn_resot;
use resot_core::data::{load_idx_gz, Standardizer};
use resot_core::model_io::{CompressedModel, StorageOptions};
use resot_core::train::{AdamConfig, LeafPrecision, RegMode, TrainConfig};
use resot_core::{InferenceMode, ObliqueTree};

fn error_rate(tree: &ObliqueTree, x: &ndarray::Array2<f64>, y: &[usize], single: bool) -> f64 {
    let wrong = (0..y.len())
        .filter(|&n| {
            let row = x.row(n).to_vec();
            let p = if single { tree.predict_singlepath(&row).unwrap().distribution } else { tree.predict_multipath(&row).unwrap() };
            let best = p.iter().enumerate().fold(0, |b, (k, v)| if *v > p[b] { k } else { b });
            best != y[n]
        })
        .count();
    wrong as f64 / y.len() as f64
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let all = load_idx_gz(&dir.join("digits-images-idx3-ubyte.gz"), &dir.join("digits-labels-idx1-ubyte.gz")).unwrap();
    let train = all.range(0, 8000);
    let test = all.range(8000, all.len());
    let scaler = if std::env::var_os("MNIST_RAW").is_some() {
        Standardizer::identity(train.features())
    } else {
        Standardizer::fit(train.x(), Standardizer::DEFAULT_FLOOR).unwrap()
    };
    let train = scaler.transform_dataset(&train).unwrap();
    let test = scaler.transform_dataset(&test).unwrap();

    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let config = TrainConfig {
        depth: 4,
        reg: RegMode::L2,
        lambda: args.first().copied().unwrap_or(0.3),
        batch_size: 128,
        pretrain_epochs: 80,
        epochs_per_round: 80,
        prune_rounds: 4,
        target_nonzeros: Some(2048),
        share_bits: 4,
        finetune_epochs: 10,
        delta_bits: args.get(2).map_or(4, |v| *v as u8),
        leaf_precision: LeafPrecision::F32,
        adam: AdamConfig { step: args.get(1).copied().unwrap_or(3e-3), ..Default::default() },
        seed: args.get(3).map_or(0, |v| *v as u64),
    };
    let start = Instant::now();
    let model = learn_resot(&train, &config, None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (xt, yt) = (test.x(), test.y());
    println!("train seconds {secs:.1}");
    println!("dense  single {:.4} multi {:.4}", error_rate(&model.dense, xt, yt, true), error_rate(&model.dense, xt, yt, false));
    let single = error_rate(&model.tree, xt, yt, true);
    let multi = error_rate(&model.tree, xt, yt, false);
    println!("final  single {single:.4} multi {multi:.4}");
    let agree = (0..yt.len())
        .filter(|&n| {
            let row = xt.row(n).to_vec();
            let a = model.tree.predict_singlepath(&row).unwrap().distribution;
            let b = model.tree.predict_multipath(&row).unwrap();
            let am = |p: &[f64]| p.iter().enumerate().fold(0, |b, (k, v)| if *v > p[b] { k } else { b });
            am(&a) == am(&b)
        })
        .count() as f64
        / yt.len() as f64;
    println!("agreement {agree:.4}");
    let multi_p = model.tree.count_used_parameters(InferenceMode::Multipath, xt.view()).unwrap();
    let single_p = model.tree.count_used_parameters(InferenceMode::Singlepath, xt.view()).unwrap();
    let per_node: Vec<usize> = (0..model.tree.internal_count()).map(|i| model.tree.theta_row(i).iter().filter(|v| **v != 0.0).count()).collect();
    println!("per node {per_node:?}");
    println!("params multi {multi_p:.1} single {single_p:.1} ratio {:.2}", multi_p / single_p);
    for precision in [LeafPrecision::F32, LeafPrecision::U8] {
        let opts = StorageOptions { delta_bits: config.delta_bits, leaf_precision: precision };
        let cm = CompressedModel::from_tree(&model.tree, &model.mask, model.shared.as_ref(), opts).unwrap();
        let report = cm.size_report().unwrap();
        println!("{precision:?} size {report:?} ratio {:.2}", report.ratio());
    }
}
