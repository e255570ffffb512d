//! Per-task feature banks (epilepsy, Parkinson tremor, finger movement).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::fir::{band_power_of, design_bandpass, FirFilter, DEFAULT_TAPS};
use super::{hjorth_of, line_length_of, moments_of, SignalWindow, VAR_EPSILON};
use crate::error::{ResotError, Result};

/// Fast ripples are only extracted from recordings sampled at least this fast.
pub const FAST_RIPPLE_MIN_RATE: f64 = 5000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskProfile {
    Epilepsy,
    Parkinson,
    Finger,
}

impl TaskProfile {
    pub const ALL: [TaskProfile; 3] = [TaskProfile::Epilepsy, TaskProfile::Parkinson, TaskProfile::Finger];

    pub fn name(self) -> &'static str {
        match self {
            TaskProfile::Epilepsy => "epilepsy",
            TaskProfile::Parkinson => "parkinson",
            TaskProfile::Finger => "finger",
        }
    }

    /// Features computed per channel, in table order.
    pub fn features(self, sample_rate: f64) -> Vec<FeatureSpec> {
        use Measure::*;
        let band = |kind, low, high| FeatureSpec { kind, measure: Band { low, high } };
        let plain = |kind, measure| FeatureSpec { kind, measure };
        match self {
            TaskProfile::Epilepsy => {
                let mut v = vec![
                    plain("LLN", LineLength),
                    plain("Pow", Power),
                    plain("Var", Variance),
                    band("Delta", 1.0, 4.0),
                    band("Theta", 4.0, 8.0),
                    band("Alpha", 8.0, 13.0),
                    band("Beta", 13.0, 30.0),
                    band("LowGamma", 30.0, 50.0),
                    band("Gamma", 50.0, 80.0),
                    band("HighGamma", 80.0, 150.0),
                    band("Ripple", 150.0, 250.0),
                ];
                if sample_rate >= FAST_RIPPLE_MIN_RATE {
                    v.push(band("FastRipple", 250.0, 600.0));
                }
                v
            }
            TaskProfile::Parkinson => vec![
                band("LowBeta", 13.0, 20.0),
                band("HighBeta", 20.0, 30.0),
                band("LowGamma", 30.0, 45.0),
                band("Gamma", 60.0, 90.0),
                band("HighGamma", 100.0, 200.0),
                band("LowHFO", 200.0, 300.0),
                band("HighHFO", 300.0, 400.0),
                plain("HFORatio", HfoRatio { low: (200.0, 300.0), high: (300.0, 400.0) }),
                band("TPow", 3.0, 7.0),
                plain("Act", Activity),
                plain("Mob", Mobility),
                plain("Com", Complexity),
            ],
            TaskProfile::Finger => vec![
                band("Alpha", 8.0, 13.0),
                band("Beta", 13.0, 30.0),
                band("LowGamma", 30.0, 60.0),
                band("Gamma", 60.0, 100.0),
                band("HighGamma", 100.0, 200.0),
                plain("LMP", LocalMotorPotential),
                plain("Act", Activity),
                plain("Mob", Mobility),
                plain("Com", Complexity),
            ],
        }
    }

    /// Every filter band the profile needs at this sample rate.
    pub fn bands(self, sample_rate: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for spec in self.features(sample_rate) {
            match spec.measure {
                Measure::Band { low, high } => out.push((low, high)),
                Measure::HfoRatio { low, high } => out.extend([low, high]),
                _ => {}
            }
        }
        let mut unique: Vec<(f64, f64)> = Vec::with_capacity(out.len());
        for b in out {
            if !unique.contains(&b) {
                unique.push(b);
            }
        }
        unique
    }

    /// Feature names for `channels` channels: channel-major, then table order.
    pub fn feature_names(self, sample_rate: f64, channels: usize) -> Vec<String> {
        let specs = self.features(sample_rate);
        (0..channels)
            .flat_map(|ch| specs.iter().map(move |s| feature_name(s.kind, ch)))
            .collect()
    }

    /// Default sample rate for this task's recordings.
    pub fn default_sample_rate(self) -> f64 {
        match self {
            TaskProfile::Epilepsy => 500.0,
            TaskProfile::Parkinson => 2048.0,
            TaskProfile::Finger => 1000.0,
        }
    }

    /// Default analysis window in seconds.
    pub fn default_window_seconds(self) -> f64 {
        match self {
            TaskProfile::Epilepsy => 1.0,
            TaskProfile::Parkinson => 0.5,
            TaskProfile::Finger => 0.2,
        }
    }
}

impl fmt::Display for TaskProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskProfile {
    type Err = ResotError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epilepsy" => Ok(TaskProfile::Epilepsy),
            "parkinson" => Ok(TaskProfile::Parkinson),
            "finger" => Ok(TaskProfile::Finger),
            _ => Err(ResotError::UnknownProfile(s.to_string())),
        }
    }
}

/// `KIND@chN`.
pub fn feature_name(kind: &str, channel: usize) -> String {
    format!("{kind}@ch{channel}")
}

/// The feature kind of a `KIND@chN` name (the whole name if there is no `@`).
pub fn feature_kind(name: &str) -> &str {
    name.split_once('@').map_or(name, |(k, _)| k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    LineLength,
    Power,
    Variance,
    Band { low: f64, high: f64 },
    HfoRatio { low: (f64, f64), high: (f64, f64) },
    Activity,
    Mobility,
    Complexity,
    LocalMotorPotential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSpec {
    pub kind: &'static str,
    pub measure: Measure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub names: Vec<String>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub taps: usize,
    /// Use 8-bit filter coefficients, as on chip.
    pub hardware_fidelity: bool,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self { taps: DEFAULT_TAPS, hardware_fidelity: false }
    }
}

/// A profile's feature bank with its filters designed for one sample rate.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    profile: TaskProfile,
    sample_rate: f64,
    specs: Vec<FeatureSpec>,
    filters: Vec<((f64, f64), FirFilter)>,
}

impl FeatureExtractor {
    pub fn new(profile: TaskProfile, sample_rate: f64, config: ExtractorConfig) -> Result<Self> {
        let specs = profile.features(sample_rate);
        let mut filters = Vec::new();
        for (low, high) in profile.bands(sample_rate) {
            if high > sample_rate / 2.0 {
                return Err(ResotError::InvalidBand { low, high, sample_rate });
            }
            let mut f = design_bandpass(low, high, sample_rate, config.taps)?;
            if config.hardware_fidelity {
                f = f.quantized(8);
            }
            filters.push(((low, high), f));
        }
        Ok(Self { profile, sample_rate, specs, filters })
    }

    pub fn profile(&self) -> TaskProfile {
        self.profile
    }

    pub fn features_per_channel(&self) -> usize {
        self.specs.len()
    }

    pub fn feature_names(&self, channels: usize) -> Vec<String> {
        self.profile.feature_names(self.sample_rate, channels)
    }

    fn filter(&self, band: (f64, f64)) -> &FirFilter {
        &self.filters.iter().find(|(b, _)| *b == band).expect("filter designed for every band").1
    }

    pub fn extract(&self, w: &SignalWindow) -> Result<FeatureVector> {
        if (w.sample_rate() - self.sample_rate).abs() > 1e-9 {
            return Err(ResotError::InvalidArgument(format!(
                "window sampled at {} Hz, extractor built for {} Hz",
                w.sample_rate(),
                self.sample_rate
            )));
        }
        if w.len() < 3 {
            return Err(ResotError::WindowTooShort { len: w.len(), needed: 3 });
        }
        let mut values = Vec::with_capacity(self.specs.len() * w.channels());
        for ch in 0..w.channels() {
            let x = w.channel(ch)?;
            let x = x.as_slice().expect("standard layout");
            let m = moments_of(x);
            let h = hjorth_of(x);
            for spec in &self.specs {
                let v = match spec.measure {
                    Measure::LineLength => line_length_of(x),
                    Measure::Power => m.power,
                    Measure::Variance => m.variance,
                    Measure::LocalMotorPotential => m.mean,
                    Measure::Band { low, high } => band_power_of(x, self.filter((low, high)))?,
                    Measure::HfoRatio { low, high } => {
                        let lo = band_power_of(x, self.filter(low))?;
                        let hi = band_power_of(x, self.filter(high))?;
                        lo / (hi + VAR_EPSILON)
                    }
                    Measure::Activity => h.activity,
                    Measure::Mobility => h.mobility,
                    Measure::Complexity => h.complexity,
                };
                values.push(v);
            }
        }
        Ok(FeatureVector { values, names: self.feature_names(w.channels()) })
    }
}

/// One-shot extraction with default filter settings.
pub fn extract_features(w: &SignalWindow, profile: TaskProfile) -> Result<FeatureVector> {
    FeatureExtractor::new(profile, w.sample_rate(), ExtractorConfig::default())?.extract(w)
}
