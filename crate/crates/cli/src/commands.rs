use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use resot_core::compress::{compress_model, LearnedModel};
use resot_core::data::{self, Dataset, Standardizer};
use resot_core::eval::{self, block_split, synth_recording, BenchOptions, SplitMode, SynthConfig};
use resot_core::model_io::{export_dot, CompressedModel, DotOptions, StorageOptions};
use resot_core::signal::io as sigio;
use resot_core::signal::profile::ExtractorConfig;
use resot_core::signal::FeatureExtractor;
use resot_core::{cost_vector, learn_resot, path_cost, CostVector, ObliqueTree, RegMode, TrainConfig};

use crate::config::{RunConfig, SynthKind};
use crate::error::{Blame, CliError, CliResult};
use crate::{Cli, Command, ModelInput};

struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(dir: &Path, cfg: &RunConfig) -> CliResult<Self> {
        fs::create_dir_all(dir).data()?;
        let out = Self { dir: dir.to_path_buf() };
        out.write("resolved-config.toml", cfg.to_toml())?;
        Ok(out)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        fs::write(self.path(name), contents).data()
    }

    fn csv(&self, name: &str) -> CliResult<fs::File> {
        fs::File::create(self.path(name)).data()
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.overrides.config.as_deref())?;
    cfg.apply(&cli.overrides);
    match &cli.command {
        Command::Extract { sample_rate: Some(fs), .. } => cfg.sample_rate = Some(*fs),
        Command::Synth { kind, windows, .. } => {
            if let Some(k) = kind {
                cfg.synth.kind = *k;
            }
            if let Some(n) = windows {
                cfg.synth.windows = *n;
            }
        }
        Command::Eval { windows: Some(n), .. } => cfg.synth.windows = *n,
        _ => {}
    }
    cfg.resolve()?;
    let out = Output::create(&cli.overrides.out, &cfg)?;
    match cli.command {
        Command::Extract { input, labels, .. } => extract(&cfg, &out, &input, labels.as_deref()),
        Command::Synth { signals, .. } => synth(&cfg, &out, signals),
        Command::Train { data } => train(&cfg, &out, &data),
        Command::Compress { input, data } => compress(&cfg, &out, &input, &data),
        Command::Infer { input, data } => infer(&cfg, &out, &input, &data),
        Command::Eval { data, .. } => evaluate(&cfg, &out, data.as_deref()),
        Command::Cost { input, data } => cost_report(&cfg, &out, &input, data.as_deref()),
        Command::ExportDot { input, data, top } => dot(&cfg, &out, &input, data.as_deref(), top),
    }
}

fn load_data(path: &Path, classes: Option<usize>) -> CliResult<Dataset> {
    data::read_csv_path(path, classes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let mut r = csv::Reader::from_path(path).data()?;
    let col = r
        .headers()
        .data()?
        .iter()
        .position(|h| h == data::LABEL_COLUMN)
        .ok_or_else(|| CliError::Data(format!("{}: no `{}` column", path.display(), data::LABEL_COLUMN)))?;
    let mut labels = Vec::new();
    for rec in r.records() {
        let rec = rec.data()?;
        let v = rec.get(col).unwrap_or_default();
        labels.push(v.trim().parse().map_err(|_| CliError::Data(format!("bad label `{v}`")))?);
    }
    Ok(labels)
}

fn fit_scaler(cfg: &RunConfig, ds: &Dataset) -> CliResult<Standardizer> {
    if cfg.standardize {
        Standardizer::fit(ds.x(), cfg.scale_floor).data()
    } else {
        Ok(Standardizer::identity(ds.features()))
    }
}

fn load_scaler(input: &ModelInput, features: usize) -> CliResult<Standardizer> {
    let sibling = input.model.with_file_name("scaler.json");
    let path = match &input.scaler {
        Some(p) => p.clone(),
        None if sibling.exists() => sibling,
        None => return Ok(Standardizer::identity(features)),
    };
    let text = fs::read_to_string(&path).data()?;
    let scaler = Standardizer::from_json(&text).data()?;
    if scaler.mean.len() != features {
        return Err(CliError::Data(format!(
            "{} scales {} features, data has {features}",
            path.display(),
            scaler.mean.len()
        )));
    }
    Ok(scaler)
}

fn load_model(input: &ModelInput) -> CliResult<CompressedModel> {
    resot_core::model_io::read_model(&input.model).map_err(|e| CliError::Data(format!("{}: {e}", input.model.display())))
}

/// Scaled data checked against the model's shape.
fn model_data(input: &ModelInput, model: &CompressedModel, path: &Path) -> CliResult<Dataset> {
    let raw = load_data(path, Some(model.classes as usize))?;
    if raw.features() != model.features as usize {
        return Err(CliError::Data(format!("model expects {} features, data has {}", model.features, raw.features())));
    }
    if raw.classes() > model.classes as usize {
        return Err(CliError::Data(format!("data has labels beyond the model's {} classes", model.classes)));
    }
    load_scaler(input, raw.features())?.transform_dataset(&raw).data()
}

/// Costs for the feature names, or unit costs when the table lacks a kind.
fn report_costs(cfg: &RunConfig, names: &[String]) -> CliResult<CostVector> {
    match cost_vector(&cfg.cost_table()?, names) {
        Ok(beta) => Ok(beta),
        Err(e) => {
            log::warn!("{e}; reporting unit feature costs");
            Ok(CostVector::uniform(names.len()))
        }
    }
}

/// Costs are mandatory for the power regularizer.
fn training_costs(cfg: &RunConfig, names: &[String]) -> CliResult<Option<CostVector>> {
    match cfg.train.reg {
        RegMode::L2 => Ok(None),
        RegMode::Power => cost_vector(&cfg.cost_table()?, names).config().map(Some),
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (k, x)| if *x > v[b] { k } else { b })
}

fn write_predictions(out: &Output, tree: &ObliqueTree, ds: &Dataset, beta: &CostVector) -> CliResult<f64> {
    let mut w = csv::Writer::from_writer(out.csv("predictions.csv")?);
    w.write_record(["sample", "prediction", "leaf", "path", "cost"]).data()?;
    let mut correct = 0;
    for n in 0..ds.len() {
        let sp = tree.predict_singlepath(ds.row(n)).data()?;
        let pred = argmax(&sp.distribution);
        correct += usize::from(pred == ds.y()[n]);
        let path: Vec<String> = sp.path.iter().map(|i| i.to_string()).collect();
        let cost = path_cost(tree, &sp.path, beta).data()?;
        w.write_record([n.to_string(), pred.to_string(), sp.leaf.to_string(), path.join("-"), cost.to_string()])
            .data()?;
    }
    w.flush().data()?;
    Ok(correct as f64 / ds.len().max(1) as f64)
}

/// Encodes to `model.resot` and returns the tree as read back from those bytes.
fn save_model(out: &Output, learned: &LearnedModel, config: &TrainConfig, names: &[String]) -> CliResult<ObliqueTree> {
    let storage = StorageOptions { delta_bits: config.delta_bits, leaf_precision: config.leaf_precision };
    let model = CompressedModel::from_tree(&learned.tree, &learned.mask, learned.shared.as_ref(), storage).data()?;
    let bytes = model.encode().data()?;
    out.write("model.resot", &bytes)?;
    let size = model.size_report().data()?;
    println!(
        "model.resot: {} bytes (dense/compressed {:.2}x), {} weights alive, {} filler entries",
        size.total,
        size.ratio(),
        size.alive,
        size.fillers
    );
    CompressedModel::decode(&bytes).data()?.to_tree(Some(names.to_vec())).data()
}

fn write_curves(out: &Output, learned: &LearnedModel) -> CliResult<()> {
    learned.log.write_csv(out.csv("curves.csv")?).data()
}

fn synth_config(cfg: &RunConfig) -> SynthConfig {
    SynthConfig {
        profile: cfg.profile,
        n_windows: cfg.synth.windows,
        seed: cfg.train.seed,
        separability: cfg.synth.separability,
        positive_fraction: cfg.synth.positive_fraction,
        channels: cfg.synth.channels,
        sample_rate: cfg.sample_rate,
        window_seconds: cfg.window_seconds,
    }
}

/// The configured synthetic dataset, with generator costs where it has them.
fn synth_dataset(cfg: &RunConfig) -> CliResult<(Dataset, Option<CostVector>)> {
    let s = &cfg.synth;
    match s.kind {
        SynthKind::Neural => Ok((eval::synth_neural(&synth_config(cfg)).config()?, None)),
        SynthKind::Moons => Ok((eval::two_moons(s.windows, s.moons_noise, cfg.train.seed).config()?, None)),
        SynthKind::Redundant => {
            let (ds, beta) = eval::synth_redundant(s.windows, s.informative, cfg.train.seed).config()?;
            Ok((ds, Some(beta)))
        }
    }
}

fn extract(cfg: &RunConfig, out: &Output, input: &Path, labels: Option<&Path>) -> CliResult<()> {
    let rec = sigio::read_recording(input, cfg.sample_rate)
        .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let seconds = cfg.window_len() as f64 / cfg.sample_rate();
    let len = (seconds * rec.sample_rate).round() as usize;
    let ex_cfg = ExtractorConfig { taps: cfg.extract.taps, hardware_fidelity: cfg.extract.hardware_fidelity };
    let extractor = FeatureExtractor::new(cfg.profile, rec.sample_rate, ex_cfg).config()?;
    let windows = rec.windows(len).config()?;
    if windows.is_empty() {
        return Err(CliError::Data(format!("recording has {} samples, shorter than one window", rec.samples())));
    }
    let rows: Vec<Vec<f64>> =
        windows.par_iter().map(|w| extractor.extract(w).map(|f| f.values)).collect::<resot_core::Result<_>>().data()?;
    let names = extractor.feature_names(rec.channels());
    let d = names.len();
    let x = Array2::from_shape_vec((rows.len(), d), rows.concat()).map_err(|e| CliError::Data(e.to_string()))?;
    let file = out.csv("features.csv")?;
    match labels {
        Some(path) => {
            let y = read_labels(path)?;
            if y.len() != windows.len() {
                return Err(CliError::Data(format!("{} labels for {} windows", y.len(), windows.len())));
            }
            let classes = y.iter().max().map_or(2, |m| (m + 1).max(2));
            let ds = Dataset::new(x, y, names, classes).data()?;
            data::write_csv(file, &ds).data()?;
        }
        None => {
            let mut w = csv::Writer::from_writer(file);
            w.write_record(&names).data()?;
            for row in x.rows() {
                w.write_record(row.iter().map(|v| v.to_string())).data()?;
            }
            w.flush().data()?;
        }
    }
    println!("features.csv: {} windows × {d} features", windows.len());
    Ok(())
}

fn synth(cfg: &RunConfig, out: &Output, signals: bool) -> CliResult<()> {
    let (ds, beta) = synth_dataset(cfg)?;
    data::write_csv(out.csv("features.csv")?, &ds).data()?;
    if let Some(beta) = beta {
        let costs: BTreeMap<&str, f64> =
            ds.feature_names().iter().map(String::as_str).zip(beta.as_slice().iter().copied()).collect();
        let table = BTreeMap::from([("costs", costs)]);
        out.write("costs.toml", toml::to_string(&table).expect("costs serialize"))?;
    }
    if signals {
        if cfg.synth.kind != SynthKind::Neural {
            return Err(CliError::Config("--signals needs --kind neural".into()));
        }
        let rec = synth_recording(&synth_config(cfg)).config()?;
        sigio::write_csv(out.csv("signals.csv")?, &rec.recording).data()?;
        let mut w = csv::Writer::from_writer(out.csv("labels.csv")?);
        w.write_record([data::LABEL_COLUMN]).data()?;
        for l in &rec.labels {
            w.write_record([l.to_string()]).data()?;
        }
        w.flush().data()?;
    }
    println!("features.csv: {} samples, {} features, class counts {:?}", ds.len(), ds.features(), ds.class_counts());
    Ok(())
}

fn train(cfg: &RunConfig, out: &Output, path: &Path) -> CliResult<()> {
    let raw = load_data(path, None)?;
    let scaler = fit_scaler(cfg, &raw)?;
    let ds = scaler.transform_dataset(&raw).data()?;
    let config = TrainConfig { share_bits: 32, ..cfg.train.clone() };
    let beta = training_costs(cfg, ds.feature_names())?;
    let learned = learn_resot(&ds, &config, beta.as_ref()).data()?;
    out.write("scaler.json", scaler.to_json())?;
    write_curves(out, &learned)?;
    let tree = save_model(out, &learned, &config, ds.feature_names())?;
    let accuracy = write_predictions(out, &tree, &ds, &report_costs(cfg, ds.feature_names())?)?;
    println!("training accuracy {accuracy:.4} over {} samples", ds.len());
    Ok(())
}

fn compress(cfg: &RunConfig, out: &Output, input: &ModelInput, path: &Path) -> CliResult<()> {
    let model = load_model(input)?;
    let ds = model_data(input, &model, path)?;
    let tree = model.to_tree(Some(ds.feature_names().to_vec())).data()?;
    let beta = training_costs(cfg, ds.feature_names())?;
    let learned = compress_model(tree, model.mask(), &ds, &cfg.train, beta.as_ref()).data()?;
    out.write("scaler.json", load_scaler(input, ds.features())?.to_json())?;
    write_curves(out, &learned)?;
    save_model(out, &learned, &cfg.train, ds.feature_names())?;
    Ok(())
}

fn infer(cfg: &RunConfig, out: &Output, input: &ModelInput, path: &Path) -> CliResult<()> {
    let model = load_model(input)?;
    let ds = model_data(input, &model, path)?;
    let tree = model.to_tree(Some(ds.feature_names().to_vec())).data()?;
    write_predictions(out, &tree, &ds, &report_costs(cfg, ds.feature_names())?)?;
    println!("predictions.csv: {} samples", ds.len());
    Ok(())
}

fn evaluate(cfg: &RunConfig, out: &Output, path: Option<&Path>) -> CliResult<()> {
    let (ds, generated) = match path {
        Some(p) => (load_data(p, None)?, None),
        None => synth_dataset(cfg)?,
    };
    let beta = match generated {
        Some(b) => Some(b),
        None if cfg.train.reg == RegMode::Power => training_costs(cfg, ds.feature_names())?,
        None => cost_vector(&cfg.cost_table()?, ds.feature_names()).ok(),
    };
    let split = block_split(ds.len(), cfg.folds, &SplitMode::Blocks).config()?;
    let opts = BenchOptions { positive_class: cfg.positive_class, standardize: cfg.standardize, scale_floor: cfg.scale_floor };
    let report = eval::benchmark(&ds, &cfg.train, beta.as_ref(), &split, opts).data()?;
    report.write_csv(out.csv("report.csv")?).data()?;
    let text = report.render_text();
    out.write("report.txt", &text)?;
    let mut w = csv::Writer::from_writer(out.csv("curves.csv")?);
    w.write_record(["fold", "epoch", "objective", "alive_count", "phase"]).data()?;
    for (fold, log) in report.curves.iter().enumerate() {
        for r in log.rows() {
            w.write_record([fold.to_string(), r.epoch.to_string(), r.objective.to_string(), r.alive_count.to_string(), r.phase.clone()])
                .data()?;
        }
    }
    w.flush().data()?;
    print!("{text}");
    Ok(())
}

/// Feature names for a model: from the data, else the profile's names when
/// the feature count fits a whole number of channels.
fn model_names(cfg: &RunConfig, features: usize) -> Option<Vec<String>> {
    let per_channel = cfg.profile.features(cfg.sample_rate()).len();
    (per_channel > 0 && features.is_multiple_of(per_channel))
        .then(|| cfg.profile.feature_names(cfg.sample_rate(), features / per_channel))
}

fn tree_and_data(cfg: &RunConfig, input: &ModelInput, path: Option<&Path>) -> CliResult<(ObliqueTree, Option<Dataset>)> {
    let model = load_model(input)?;
    let ds = path.map(|p| model_data(input, &model, p)).transpose()?;
    let names = match &ds {
        Some(d) => Some(d.feature_names().to_vec()),
        None => model_names(cfg, model.features as usize),
    };
    Ok((model.to_tree(names).data()?, ds))
}

fn cost_report(cfg: &RunConfig, out: &Output, input: &ModelInput, path: Option<&Path>) -> CliResult<()> {
    let (tree, ds) = tree_and_data(cfg, input, path)?;
    let beta = report_costs(cfg, tree.feature_names())?;
    let d = tree.feature_count();
    let mut w = csv::Writer::from_writer(out.csv("cost.csv")?);
    w.write_record(["node", "features_used", "cost"]).data()?;
    let mut node_cost = Vec::with_capacity(tree.internal_count());
    for i in 0..tree.internal_count() {
        let row = tree.theta_row(i);
        let used: Vec<usize> = (0..d).filter(|&j| row[j] != 0.0).collect();
        let c = used.iter().fold(0.0, |acc, &j| acc + beta.as_slice()[j]);
        node_cost.push(c);
        w.write_record([i.to_string(), used.len().to_string(), c.to_string()]).data()?;
    }
    w.flush().data()?;

    let mut worst: f64 = 0.0;
    for leaf in 0..tree.leaf_count() {
        let mut path = Vec::with_capacity(tree.depth());
        let mut k = tree.internal_count() + leaf;
        while k > 0 {
            k = (k - 1) / 2;
            path.push(k);
        }
        path.reverse();
        worst = worst.max(path_cost(&tree, &path, &beta).data()?);
    }
    let mut text = format!(
        "nodes {}, features {}, total node cost {:.3}, worst-case path cost {worst:.3}\n",
        tree.internal_count(),
        d,
        node_cost.iter().sum::<f64>()
    );
    if let Some(ds) = &ds {
        text += &format!("mean single-path power over {} samples {:.3}\n", ds.len(), eval::mean_power(&tree, ds, &beta).data()?);
    }
    out.write("cost.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn dot(cfg: &RunConfig, out: &Output, input: &ModelInput, path: Option<&Path>, top: usize) -> CliResult<()> {
    let (tree, ds) = tree_and_data(cfg, input, path)?;
    let text = export_dot(&tree, ds.as_ref(), DotOptions { top_weights: top }).data()?;
    out.write("tree.dot", text)?;
    println!("tree.dot: {} nodes", tree.internal_count() + tree.leaf_count());
    Ok(())
}
