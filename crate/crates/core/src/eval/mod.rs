//! Block-wise cross-validation, metrics, synthetic data and benchmark reports.

mod metrics;
mod split;
pub mod synth;

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compress::{learn_resot, TrainingLog};
use crate::cost::{path_cost, CostVector};
use crate::data::{Dataset, Standardizer};
use crate::error::{ResotError, Result};
use crate::model_io::{CompressedModel, StorageOptions};
use crate::train::TrainConfig;
use crate::tree::{descend, InferenceMode, ObliqueTree};

pub use metrics::{metrics, ConfusionMatrix, MetricFlags, Metrics};
pub use split::{block_split, BlockSplit, Fold, SplitMode};
pub use synth::{synth_neural, synth_recording, synth_redundant, two_moons, SynthConfig, SynthRecording};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    /// Class scored by F1, sensitivity and specificity; see [`metrics`].
    pub positive_class: Option<usize>,
    /// Z-score features with statistics from each fold's training blocks.
    pub standardize: bool,
    pub scale_floor: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { positive_class: None, standardize: true, scale_floor: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Metrics,
    pub size_bytes: usize,
    pub compression_ratio: f64,
    /// Mean single-path feature cost per test sample.
    pub power: f64,
    pub params_multi: f64,
    pub params_single: f64,
}

/// Per-fold quantities aggregated across folds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub size_bytes: f64,
    pub compression_ratio: f64,
    pub power: f64,
    pub params_multi: f64,
    pub params_single: f64,
}

impl Summary {
    fn of(f: &FoldReport) -> Self {
        Self {
            accuracy: f.metrics.accuracy,
            f1: f.metrics.f1,
            sensitivity: f.metrics.sensitivity,
            specificity: f.metrics.specificity,
            size_bytes: f.size_bytes as f64,
            compression_ratio: f.compression_ratio,
            power: f.power,
            params_multi: f.params_multi,
            params_single: f.params_single,
        }
    }

    fn fields(&self) -> [f64; 9] {
        [
            self.accuracy,
            self.f1,
            self.sensitivity,
            self.specificity,
            self.size_bytes,
            self.compression_ratio,
            self.power,
            self.params_multi,
            self.params_single,
        ]
    }

    fn from_fields(v: [f64; 9]) -> Self {
        let [accuracy, f1, sensitivity, specificity, size_bytes, compression_ratio, power, params_multi, params_single] = v;
        Self { accuracy, f1, sensitivity, specificity, size_bytes, compression_ratio, power, params_multi, params_single }
    }
}

/// Per-fold results, their mean and sample (n-1) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<FoldReport>,
    pub mean: Summary,
    /// Zero when there is a single fold.
    pub std: Summary,
    #[serde(skip)]
    pub curves: Vec<TrainingLog>,
}

const CSV_HEADER: [&str; 13] = [
    "fold",
    "n_train",
    "n_test",
    "accuracy",
    "f1",
    "sensitivity",
    "specificity",
    "flagged",
    "size_bytes",
    "compression_ratio",
    "power",
    "params_multi",
    "params_single",
];

impl EvalReport {
    fn aggregate(folds: Vec<FoldReport>, curves: Vec<TrainingLog>) -> Self {
        let n = folds.len() as f64;
        let rows: Vec<[f64; 9]> = folds.iter().map(|f| Summary::of(f).fields()).collect();
        let mut mean = [0.0; 9];
        let mut std = [0.0; 9];
        for k in 0..9 {
            mean[k] = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            if folds.len() > 1 {
                std[k] = (rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            }
        }
        Self { folds, mean: Summary::from_fields(mean), std: Summary::from_fields(std), curves }
    }

    /// One row per fold, then `mean` and `std` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for f in &self.folds {
            let s = Summary::of(f).fields();
            let mut rec = vec![f.fold.to_string(), f.n_train.to_string(), f.n_test.to_string()];
            rec.extend(s[..4].iter().map(|v| v.to_string()));
            rec.push(u8::from(f.metrics.flags.any()).to_string());
            rec.push(f.size_bytes.to_string());
            rec.extend(s[5..].iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        for (name, s) in [("mean", &self.mean), ("std", &self.std)] {
            let v = s.fields();
            let mut rec = vec![name.to_string(), String::new(), String::new()];
            rec.extend(v[..4].iter().map(|x| x.to_string()));
            rec.push(String::new());
            rec.extend(v[4..].iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} fold(s); std over folds uses the sample (n-1) convention", self.folds.len());
        let _ = writeln!(
            out,
            "{:>5} {:>8} {:>8} {:>8} {:>8} {:>9} {:>8} {:>10}",
            "fold", "acc", "f1", "sens", "spec", "bytes", "ratio", "power"
        );
        for f in &self.folds {
            let m = &f.metrics;
            let flag = if m.flags.any() { "*" } else { "" };
            let _ = writeln!(
                out,
                "{:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>9} {:>8.2} {:>10.3}{flag}",
                f.fold, m.accuracy, m.f1, m.sensitivity, m.specificity, f.size_bytes, f.compression_ratio, f.power
            );
        }
        let (m, s) = (&self.mean, &self.std);
        let _ = writeln!(out, "accuracy    {:.4} ± {:.4}", m.accuracy, s.accuracy);
        let _ = writeln!(out, "f1          {:.4} ± {:.4}", m.f1, s.f1);
        let _ = writeln!(out, "sensitivity {:.4} ± {:.4}", m.sensitivity, s.sensitivity);
        let _ = writeln!(out, "specificity {:.4} ± {:.4}", m.specificity, s.specificity);
        let _ = writeln!(out, "size        {:.1} ± {:.1} bytes ({:.2}x)", m.size_bytes, s.size_bytes, m.compression_ratio);
        let _ = writeln!(out, "power       {:.3} ± {:.3}", m.power, s.power);
        let _ = writeln!(out, "parameters  multipath {:.1}, single-path {:.1}", m.params_multi, m.params_single);
        if self.folds.iter().any(|f| f.metrics.flags.any()) {
            let _ = writeln!(out, "* a rate had a zero denominator and was reported as 0");
        }
        out
    }
}

/// Single-path class predictions.
pub fn predict_labels(tree: &ObliqueTree, data: &Dataset) -> Vec<usize> {
    (0..data.len())
        .map(|n| {
            let (_, leaf) = descend(tree, data.row(n));
            let omega = tree.leaf_distribution(leaf);
            omega.iter().enumerate().fold(0, |b, (k, v)| if *v > omega[b] { k } else { b })
        })
        .collect()
}

/// Mean [`path_cost`] over the single-path routes of `data`.
pub fn mean_power(tree: &ObliqueTree, data: &Dataset, beta: &CostVector) -> Result<f64> {
    if data.is_empty() {
        return Err(ResotError::EmptyBatch);
    }
    let mut total = 0.0;
    for n in 0..data.len() {
        let (path, _) = descend(tree, data.row(n));
        total += path_cost(tree, &path, beta)?;
    }
    Ok(total / data.len() as f64)
}

/// Runs [`learn_resot`] on every fold's training blocks and scores the
/// compressed tree on the held-out block. Power uses `beta` when given and
/// unit costs otherwise.
pub fn benchmark(
    data: &Dataset,
    config: &TrainConfig,
    beta: Option<&CostVector>,
    split: &BlockSplit,
    opts: BenchOptions,
) -> Result<EvalReport> {
    config.validate()?;
    if split.n_samples() != data.len() {
        return Err(ResotError::DimensionMismatch { expected: data.len(), actual: split.n_samples() });
    }
    let unit = CostVector::uniform(data.features());
    let power_beta = beta.unwrap_or(&unit);
    let results: Vec<(FoldReport, TrainingLog)> = (0..split.len())
        .into_par_iter()
        .map(|fold| {
            let mut train = data.subset(&split.train_indices(fold));
            let mut test = data.subset(&split.test_indices(fold));
            if opts.standardize {
                let scaler = Standardizer::fit(train.x(), opts.scale_floor)?;
                train = scaler.transform_dataset(&train)?;
                test = scaler.transform_dataset(&test)?;
            }
            let fold_config = TrainConfig { seed: config.seed.wrapping_add(fold as u64), ..config.clone() };
            let learned = learn_resot(&train, &fold_config, beta)?;
            let tree = &learned.tree;
            let predicted = predict_labels(tree, &test);
            let m = metrics(test.y(), &predicted, data.classes(), opts.positive_class)?;
            let storage = StorageOptions { delta_bits: config.delta_bits, leaf_precision: config.leaf_precision };
            let size = CompressedModel::from_tree(tree, &learned.mask, learned.shared.as_ref(), storage)?.size_report()?;
            let report = FoldReport {
                fold,
                n_train: train.len(),
                n_test: test.len(),
                metrics: m,
                size_bytes: size.total,
                compression_ratio: size.ratio(),
                power: mean_power(tree, &test, power_beta)?,
                params_multi: tree.count_used_parameters(InferenceMode::Multipath, test.x().view())?,
                params_single: tree.count_used_parameters(InferenceMode::Singlepath, test.x().view())?,
            };
            Ok((report, learned.log))
        })
        .collect::<Result<_>>()?;
    let (folds, curves) = results.into_iter().unzip();
    Ok(EvalReport::aggregate(folds, curves))
}

#[cfg(test)]
mod tests;
