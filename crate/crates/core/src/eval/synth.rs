//! Synthetic stand-ins for the three neural tasks, plus small tabular sets.
//!
//! Background activity is pink-ish noise; labelled episodes inject
//! task-specific rhythms. `separability` scales every injected component, so
//! 0 gives indistinguishable classes and the default 1.0 gives a task that a
//! depth-4 tree solves well but not perfectly.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostVector;
use crate::data::Dataset;
use crate::error::{ResotError, Result};
use crate::signal::io::Recording;
use crate::signal::profile::ExtractorConfig;
use crate::signal::{FeatureExtractor, TaskProfile};

/// Background RMS in signal units.
const BACKGROUND_RMS: f64 = 20.0;
/// Finger-movement classes: rest plus five fingers.
pub const FINGER_CLASSES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub profile: TaskProfile,
    pub n_windows: usize,
    pub seed: u64,
    pub separability: f64,
    /// Share of windows that are events (any non-rest class for finger).
    /// `None` uses 0.5, or 5/6 for finger so all six classes are equally common.
    pub positive_fraction: Option<f64>,
    pub channels: Option<usize>,
    pub sample_rate: Option<f64>,
    pub window_seconds: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::new(TaskProfile::Epilepsy, 600, 0)
    }
}

impl SynthConfig {
    pub fn new(profile: TaskProfile, n_windows: usize, seed: u64) -> Self {
        Self {
            profile,
            n_windows,
            seed,
            separability: 1.0,
            positive_fraction: None,
            channels: None,
            sample_rate: None,
            window_seconds: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels.unwrap_or(match self.profile {
            TaskProfile::Epilepsy => 2,
            TaskProfile::Parkinson => 1,
            TaskProfile::Finger => 5,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate.unwrap_or(self.profile.default_sample_rate())
    }

    pub fn window_len(&self) -> usize {
        (self.window_seconds.unwrap_or(self.profile.default_window_seconds()) * self.sample_rate()).round() as usize
    }

    pub fn classes(&self) -> usize {
        match self.profile {
            TaskProfile::Finger => FINGER_CLASSES,
            _ => 2,
        }
    }

    fn positive_fraction(&self) -> f64 {
        self.positive_fraction.unwrap_or(match self.profile {
            TaskProfile::Finger => 5.0 / 6.0,
            _ => 0.5,
        })
    }

    fn validate(&self) -> Result<()> {
        let f = self.positive_fraction();
        let ok = self.n_windows > 0
            && self.separability >= 0.0
            && self.separability.is_finite()
            && f > 0.0
            && f < 1.0
            && self.channels() > 0
            && self.window_len() >= 3;
        if !ok {
            return Err(ResotError::InvalidArgument(format!("invalid synthetic settings {self:?}")));
        }
        if self.profile == TaskProfile::Finger && self.channels() < 5 {
            return Err(ResotError::InvalidArgument("finger data needs at least 5 channels".into()));
        }
        Ok(())
    }
}

/// A continuous recording with one label per `window_len` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub recording: Recording,
    pub labels: Vec<usize>,
    pub window_len: usize,
}

/// Episode labels: runs of 2-6 windows, events interleaved with background.
fn episode_labels(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let f = cfg.positive_fraction();
    let mean_event = 4.0;
    let mean_rest = mean_event * (1.0 - f) / f;
    let mut labels = Vec::with_capacity(cfg.n_windows + 8);
    let mut event = rng.random_bool(f);
    while labels.len() < cfg.n_windows {
        let (label, len) = if event {
            let label = if cfg.profile == TaskProfile::Finger { rng.random_range(1..FINGER_CLASSES) } else { 1 };
            (label, rng.random_range(2..=6))
        } else {
            let hi = (2.0 * mean_rest - 1.0).round().max(1.0) as usize;
            (0, rng.random_range(1..=hi))
        };
        labels.extend(std::iter::repeat_n(label, len));
        event = !event;
    }
    labels.truncate(cfg.n_windows);
    labels
}

/// Sum of first-order low-pass sections with decade-spaced corners, scaled to
/// `BACKGROUND_RMS`; roughly 1/f between 1 Hz and a quarter of the sample rate.
fn pink_noise(n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut corners = vec![];
    let mut fc = 1.0;
    while fc < fs / 4.0 {
        corners.push(fc);
        fc *= 10.0;
    }
    let poles: Vec<f64> = corners.iter().map(|fc| (-2.0 * PI * fc / fs).exp()).collect();
    let mut state = vec![0.0; poles.len()];
    let burn = (fs / corners[0]).ceil() as usize * 4;
    let mut out = Vec::with_capacity(n);
    for t in 0..n + burn {
        let mut y = 0.05 * rng.sample::<f64, _>(StandardNormal);
        // Unit-variance sections with log-spaced corners sum to about 1/f.
        for (s, a) in state.iter_mut().zip(&poles) {
            let w: f64 = rng.sample(StandardNormal);
            *s = a * *s + (1.0 - a * a).sqrt() * w;
            y += *s;
        }
        if t >= burn {
            out.push(y);
        }
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    out.iter().map(|v| v * BACKGROUND_RMS / rms).collect()
}

/// Episode start and end windows for each maximal run of equal labels.
fn runs(labels: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            out.push((start, i, labels[start]));
            start = i;
        }
    }
    out
}

/// Generates the raw multichannel signal.
pub fn synth_recording(cfg: &SynthConfig) -> Result<SynthRecording> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = episode_labels(cfg, &mut rng);
    let fs = cfg.sample_rate();
    let wl = cfg.window_len();
    let channels = cfg.channels();
    let n = wl * cfg.n_windows;
    let sep = cfg.separability;
    let amp = sep * BACKGROUND_RMS;

    let mut data = Array2::<f64>::zeros((channels, n));
    for ch in 0..channels {
        let noise = pink_noise(n, fs, &mut rng);
        data.row_mut(ch).iter_mut().zip(noise).for_each(|(d, v)| *d = v);
    }

    let white = Normal::new(0.0, 1.0).expect("valid normal");
    for (w0, w1, label) in runs(&labels) {
        let span = w0 * wl..w1 * wl;
        match (cfg.profile, label) {
            (TaskProfile::Epilepsy, 1) => {
                // Spike-and-wave discharge plus broadband activity.
                let f0 = rng.random_range(2.5..4.0);
                let phase = rng.random_range(0.0..2.0 * PI);
                for ch in 0..channels {
                    let gain = rng.random_range(0.7..1.3);
                    for t in span.clone() {
                        let th = 2.0 * PI * f0 * t as f64 / fs + phase;
                        let spike = (th.sin()).max(0.0).powi(8) * 3.0 - 0.6 * th.sin();
                        let broad = white.sample(&mut rng);
                        data[[ch, t]] += gain * amp * (0.6 * spike + 0.5 * broad);
                    }
                }
            }
            (TaskProfile::Parkinson, 1) => {
                let f0 = rng.random_range(3.5..6.5);
                let phase = rng.random_range(0.0..2.0 * PI);
                for ch in 0..channels {
                    for t in span.clone() {
                        data[[ch, t]] += 1.2 * amp * (2.0 * PI * f0 * t as f64 / fs + phase).sin();
                    }
                }
            }
            (TaskProfile::Finger, c) => {
                // Beta rhythm at rest, suppressed during movement; gamma burst on
                // the moving finger's channel and weakly on its neighbours.
                let beta_gain = if c == 0 { 1.0 } else { 1.0 - 0.7 * sep.min(1.0) };
                let fb = rng.random_range(18.0..24.0);
                let tones: Vec<(f64, f64)> =
                    (0..3).map(|_| (rng.random_range(65.0..95.0), rng.random_range(0.0..2.0 * PI))).collect();
                for ch in 0..channels {
                    let pb = rng.random_range(0.0..2.0 * PI);
                    let g = match c {
                        0 => 0.0,
                        _ if ch == c - 1 => 1.0,
                        _ if ch + 1 == c - 1 || ch == c => 0.3,
                        _ => 0.0,
                    };
                    for t in span.clone() {
                        let time = t as f64 / fs;
                        let beta = 0.6 * BACKGROUND_RMS * beta_gain * (2.0 * PI * fb * time + pb).sin();
                        let gamma: f64 = tones.iter().map(|(f, p)| (2.0 * PI * f * time + p).sin()).sum();
                        data[[ch, t]] += beta + 0.6 * amp * g * gamma;
                    }
                }
            }
            _ => {}
        }
    }

    // Per-window gain jitter, so raw power alone is not a perfect cue.
    let jitter = LogNormal::new(0.0, 0.2).expect("valid lognormal");
    for w in 0..cfg.n_windows {
        let g = jitter.sample(&mut rng);
        data.slice_mut(ndarray::s![.., w * wl..(w + 1) * wl]).mapv_inplace(|v| v * g);
    }

    let recording = Recording {
        channel_names: (0..channels).map(|c| format!("ch{c}")).collect(),
        sample_rate: fs,
        data,
    };
    Ok(SynthRecording { recording, labels, window_len: wl })
}

/// Feature-level synthetic dataset for `cfg.profile`.
pub fn synth_neural(cfg: &SynthConfig) -> Result<Dataset> {
    let rec = synth_recording(cfg)?;
    let extractor = FeatureExtractor::new(cfg.profile, cfg.sample_rate(), ExtractorConfig::default())?;
    let windows = rec.recording.windows(rec.window_len)?;
    let rows: Vec<Vec<f64>> =
        windows.par_iter().map(|w| extractor.extract(w).map(|f| f.values)).collect::<Result<_>>()?;
    let d = extractor.features_per_channel() * cfg.channels();
    let x = Array2::from_shape_vec((rows.len(), d), rows.concat()).map_err(|e| ResotError::InvalidArgument(e.to_string()))?;
    Dataset::new(x, rec.labels, extractor.feature_names(cfg.channels()), cfg.classes())
}

/// Cost of the cheap and the costly copy of each redundant feature.
pub const CHEAP_COST: f64 = 1.0;
pub const COSTLY_COST: f64 = 34.07;

/// Binary task over `informative` latent signals, each observed twice: a cheap
/// copy `Cheap{j}` (cost 1) and a costly copy `Costly{j}` (cost 34.07) equal
/// to the cheap one plus small noise.
pub fn synth_redundant(n: usize, informative: usize, seed: u64) -> Result<(Dataset, CostVector)> {
    if n == 0 || informative == 0 {
        return Err(ResotError::InvalidArgument("need samples and features".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..informative).map(|j| if j % 2 == 0 { 1.0 } else { -0.7 }).collect();
    let mut x = Array2::<f64>::zeros((n, 2 * informative));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let z: Vec<f64> = (0..informative).map(|_| rng.sample(StandardNormal)).collect();
        let score: f64 = z.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>() + 0.3 * rng.sample::<f64, _>(StandardNormal);
        y.push(usize::from(score > 0.0));
        for j in 0..informative {
            x[[i, j]] = z[j];
            x[[i, informative + j]] = z[j] + 0.05 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let names: Vec<String> =
        (0..informative).map(|j| format!("Cheap{j}")).chain((0..informative).map(|j| format!("Costly{j}"))).collect();
    let costs: Vec<f64> = (0..2 * informative).map(|j| if j < informative { CHEAP_COST } else { COSTLY_COST }).collect();
    Ok((Dataset::new(x, y, names, 2)?, CostVector::from_costs(&costs)?))
}

/// Two interleaved half circles with Gaussian noise.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || noise.is_nan() || noise < 0.0 {
        return Err(ResotError::InvalidArgument(format!("two moons with n = {n}, noise = {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::<f64>::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let t = rng.random_range(0.0..PI);
        let (a, b) = if label == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        x[[i, 0]] = a + noise * rng.sample::<f64, _>(StandardNormal);
        x[[i, 1]] = b + noise * rng.sample::<f64, _>(StandardNormal);
        y.push(label);
    }
    Dataset::new(x, y, vec!["x0".into(), "x1".into()], 2)
}
