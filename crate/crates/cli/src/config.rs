use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use resot_core::{FeatureCostTable, RegMode, TaskProfile, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Blame, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Synthetic recordings of the configured profile, then feature extraction.
    Neural,
    /// Two interleaved half circles.
    Moons,
    /// Cheap features with costly near-duplicates.
    Redundant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub kind: SynthKind,
    pub windows: usize,
    pub separability: f64,
    pub positive_fraction: Option<f64>,
    pub channels: Option<usize>,
    pub moons_noise: f64,
    pub informative: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            kind: SynthKind::Neural,
            windows: 600,
            separability: 1.0,
            positive_fraction: None,
            channels: None,
            moons_noise: 0.2,
            informative: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    pub taps: usize,
    /// 8-bit filter coefficients.
    pub hardware_fidelity: bool,
}

impl Default for ExtractSection {
    fn default() -> Self {
        Self { taps: resot_core::signal::DEFAULT_TAPS, hardware_fidelity: false }
    }
}

/// Everything a run depends on. Written back as `resolved-config.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: TaskProfile,
    /// Defaults to the profile's rate.
    pub sample_rate: Option<f64>,
    /// Defaults to the profile's window.
    pub window_seconds: Option<f64>,
    pub folds: usize,
    pub standardize: bool,
    /// Added to every feature's standard deviation before scaling.
    pub scale_floor: f64,
    pub positive_class: Option<usize>,
    pub train: TrainConfig,
    pub synth: SynthSection,
    pub extract: ExtractSection,
    /// Per feature kind, on top of the profile's table.
    pub costs: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile: TaskProfile::Epilepsy,
            sample_rate: None,
            window_seconds: None,
            folds: 5,
            standardize: true,
            scale_floor: 1e-9,
            positive_class: None,
            train: TrainConfig::default(),
            synth: SynthSection::default(),
            extract: ExtractSection::default(),
            costs: BTreeMap::new(),
        }
    }
}

/// Flags shared by every subcommand. Flags win over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// l2 or power.
    #[arg(long, global = true)]
    pub reg: Option<RegMode>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub prune_rounds: Option<usize>,
    #[arg(long, global = true)]
    pub target_nonzeros: Option<usize>,
    #[arg(long, global = true)]
    pub share_bits: Option<u8>,
    /// epilepsy, parkinson or finger.
    #[arg(long, global = true)]
    pub profile: Option<TaskProfile>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "resot-out")]
    pub out: PathBuf,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.train.seed = v;
        }
        if let Some(v) = o.depth {
            self.train.depth = v;
        }
        if let Some(v) = o.reg {
            self.train.reg = v;
        }
        if let Some(v) = o.lambda {
            self.train.lambda = v;
        }
        if let Some(v) = o.prune_rounds {
            self.train.prune_rounds = v;
        }
        if o.target_nonzeros.is_some() {
            self.train.target_nonzeros = o.target_nonzeros;
        }
        if let Some(v) = o.share_bits {
            self.train.share_bits = v;
        }
        if let Some(v) = o.profile {
            self.profile = v;
        }
        if let Some(v) = o.folds {
            self.folds = v;
        }
    }

    /// Fills profile-dependent defaults and checks every field.
    pub fn resolve(&mut self) -> CliResult<()> {
        self.sample_rate.get_or_insert(self.profile.default_sample_rate());
        self.window_seconds.get_or_insert(self.profile.default_window_seconds());
        self.train.validate().config()?;
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.sample_rate() > 0.0 && self.sample_rate().is_finite()) {
            return bad(format!("sample_rate must be positive, got {}", self.sample_rate()));
        }
        if self.window_len() < 3 {
            return bad(format!("a window of {} s holds fewer than 3 samples", self.window_seconds.unwrap_or_default()));
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if !(self.scale_floor >= 0.0 && self.scale_floor.is_finite()) {
            return bad(format!("scale_floor must be non-negative, got {}", self.scale_floor));
        }
        if self.synth.windows == 0 || self.synth.informative == 0 {
            return bad("synth.windows and synth.informative must be positive".into());
        }
        self.cost_table()?;
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate.unwrap_or(self.profile.default_sample_rate())
    }

    pub fn window_len(&self) -> usize {
        (self.window_seconds.unwrap_or(self.profile.default_window_seconds()) * self.sample_rate()).round() as usize
    }

    pub fn cost_table(&self) -> CliResult<FeatureCostTable> {
        let mut entries = resot_core::default_costs(self.profile).entries().clone();
        entries.extend(self.costs.iter().map(|(k, v)| (k.clone(), *v)));
        FeatureCostTable::new(entries).config()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
