//! Windowed biosignal feature extraction.
//!
//! A [`SignalWindow`] holds `channels × d` samples. The time-domain measures
//! (line-length, moments, Hjorth parameters) live here; FIR band power lives in
//! [`fir`], and the per-task feature banks in [`profile`].

pub mod fir;
pub mod io;
pub mod profile;

use ndarray::{Array2, ArrayView1};

use crate::error::{ResotError, Result};

pub use fir::{band_power, design_bandpass, FirFilter, DEFAULT_TAPS};
pub use profile::{extract_features, FeatureExtractor, FeatureSpec, FeatureVector, Measure, TaskProfile};

/// Variance below which a window is treated as constant.
pub const VAR_EPSILON: f64 = 1e-12;

/// A multi-channel window of samples, `channels × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    samples: Array2<f64>,
    sample_rate: f64,
}

impl SignalWindow {
    pub fn new(samples: Array2<f64>, sample_rate: f64) -> Result<Self> {
        if sample_rate.is_nan() || sample_rate <= 0.0 || !sample_rate.is_finite() {
            return Err(ResotError::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.nrows() == 0 {
            return Err(ResotError::InvalidArgument("window has no channels".into()));
        }
        if samples.ncols() < 2 {
            return Err(ResotError::WindowTooShort { len: samples.ncols(), needed: 2 });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(ResotError::NonFinite("signal samples".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Single-channel convenience constructor.
    pub fn from_channel(samples: &[f64], sample_rate: f64) -> Result<Self> {
        let arr = Array2::from_shape_vec((1, samples.len()), samples.to_vec())
            .map_err(|e| ResotError::InvalidArgument(e.to_string()))?;
        Self::new(arr, sample_rate)
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    /// Window length `d` in samples.
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn channel(&self, channel: usize) -> Result<ArrayView1<'_, f64>> {
        if channel >= self.channels() {
            return Err(ResotError::ChannelOutOfRange { channel, channels: self.channels() });
        }
        Ok(self.samples.row(channel))
    }

    fn channel_vec(&self, channel: usize) -> Result<Vec<f64>> {
        Ok(self.channel(channel)?.to_vec())
    }
}

/// Power, variance and mean of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub power: f64,
    pub variance: f64,
    pub mean: f64,
}

/// Hjorth activity, mobility and complexity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hjorth {
    pub activity: f64,
    pub mobility: f64,
    pub complexity: f64,
}

/// `(1/d) Σ_{n=1}^{d-1} |x[n] - x[n-1]|`: d-1 differences divided by d.
pub fn line_length(w: &SignalWindow, channel: usize) -> Result<f64> {
    let x = w.channel(channel)?;
    Ok(line_length_of(x.as_slice().expect("standard layout")))
}

pub(crate) fn line_length_of(x: &[f64]) -> f64 {
    let sum: f64 = x.windows(2).map(|p| (p[1] - p[0]).abs()).sum();
    sum / x.len() as f64
}

pub fn moments(w: &SignalWindow, channel: usize) -> Result<Moments> {
    let x = w.channel(channel)?;
    Ok(moments_of(x.as_slice().expect("standard layout")))
}

pub(crate) fn moments_of(x: &[f64]) -> Moments {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let power = x.iter().map(|v| v * v).sum::<f64>() / d;
    let variance = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    Moments { power, variance, mean }
}

fn variance_of(x: &[f64]) -> f64 {
    moments_of(x).variance
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|p| p[1] - p[0]).collect()
}

/// Hjorth parameters; all zero when the window variance is below [`VAR_EPSILON`].
pub fn hjorth(w: &SignalWindow, channel: usize) -> Result<Hjorth> {
    if w.len() < 3 {
        return Err(ResotError::WindowTooShort { len: w.len(), needed: 3 });
    }
    Ok(hjorth_of(&w.channel_vec(channel)?))
}

pub(crate) fn hjorth_of(x: &[f64]) -> Hjorth {
    let var_x = variance_of(x);
    if var_x < VAR_EPSILON {
        return Hjorth { activity: 0.0, mobility: 0.0, complexity: 0.0 };
    }
    let dx = diff(x);
    let var_dx = variance_of(&dx);
    let mobility = (var_dx / var_x).sqrt();
    let complexity = if var_dx < VAR_EPSILON || mobility == 0.0 {
        0.0
    } else {
        let ddx = diff(&dx);
        let mobility_dx = (variance_of(&ddx) / var_dx).sqrt();
        mobility_dx / mobility
    };
    Hjorth { activity: var_x, mobility, complexity }
}
