//! Linear-phase FIR bandpass design and band-power measurement.

use std::f64::consts::PI;

use super::SignalWindow;
use crate::error::{ResotError, Result};

/// Tap count used by the on-chip filter bank.
pub const DEFAULT_TAPS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    coefficients: Vec<f64>,
    band: (f64, f64),
    sample_rate: f64,
}

impl FirFilter {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn taps(&self) -> usize {
        self.coefficients.len()
    }

    pub fn band(&self) -> (f64, f64) {
        self.band
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Magnitude of the frequency response at `freq` Hz.
    pub fn magnitude_at(&self, freq: f64) -> f64 {
        let omega = 2.0 * PI * freq / self.sample_rate;
        let (re, im) = self
            .coefficients
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (n, c)| {
                let phase = omega * n as f64;
                (re + c * phase.cos(), im - c * phase.sin())
            });
        re.hypot(im)
    }

    /// Coefficients rounded to signed `bits`-bit fixed point (scaled so the
    /// largest magnitude maps to full scale), then dequantized.
    pub fn quantized(&self, bits: u32) -> FirFilter {
        assert!((2..=16).contains(&bits), "quantization bits out of range");
        let full_scale = ((1_i64 << (bits - 1)) - 1) as f64;
        let peak = self.coefficients.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if peak == 0.0 {
            return self.clone();
        }
        let step = peak / full_scale;
        let coefficients = self.coefficients.iter().map(|c| (c / step).round() * step).collect();
        FirFilter { coefficients, ..self.clone() }
    }
}

/// Hamming-windowed sinc bandpass, normalized to unit gain at the band centre
/// (at DC when `low == 0`, which degenerates to a lowpass).
pub fn design_bandpass(low: f64, high: f64, sample_rate: f64, taps: usize) -> Result<FirFilter> {
    let nyquist = sample_rate / 2.0;
    let valid = sample_rate > 0.0
        && low.is_finite()
        && high.is_finite()
        && low >= 0.0
        && low < high
        && high <= nyquist;
    if !valid {
        return Err(ResotError::InvalidBand { low, high, sample_rate });
    }
    if taps < 3 {
        return Err(ResotError::InvalidArgument(format!("need at least 3 taps, got {taps}")));
    }

    let fl = low / sample_rate;
    let fh = high / sample_rate;
    let mid = (taps - 1) as f64 / 2.0;
    let mut coefficients: Vec<f64> = (0..taps)
        .map(|n| {
            let t = n as f64 - mid;
            let ideal = 2.0 * fh * sinc(2.0 * fh * t) - 2.0 * fl * sinc(2.0 * fl * t);
            let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos();
            ideal * window
        })
        .collect();

    let mut filter = FirFilter { coefficients: coefficients.clone(), band: (low, high), sample_rate };
    let reference = if low == 0.0 { 0.0 } else { (low + high) / 2.0 };
    let gain = filter.magnitude_at(reference);
    if gain > 0.0 {
        coefficients.iter_mut().for_each(|c| *c /= gain);
    }
    // Enforce exact symmetry against rounding in the window cosine.
    for i in 0..taps / 2 {
        let avg = 0.5 * (coefficients[i] + coefficients[taps - 1 - i]);
        coefficients[i] = avg;
        coefficients[taps - 1 - i] = avg;
    }
    filter.coefficients = coefficients;
    Ok(filter)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Mean squared filter output over the steady-state region: the first
/// `taps - 1` outputs (filter warm-up) are discarded.
pub fn band_power(w: &SignalWindow, channel: usize, filter: &FirFilter) -> Result<f64> {
    let x = w.channel(channel)?;
    band_power_of(x.as_slice().expect("standard layout"), filter)
}

pub(crate) fn band_power_of(x: &[f64], filter: &FirFilter) -> Result<f64> {
    let taps = filter.taps();
    if x.len() < taps {
        return Err(ResotError::WindowTooShort { len: x.len(), needed: taps });
    }
    let c = filter.coefficients();
    let valid = x.len() - taps + 1;
    let mut acc = 0.0;
    for start in 0..valid {
        // y[n] = Σ_k c[k]·x[n-k] with n = start + taps - 1
        let y: f64 = x[start..start + taps].iter().rev().zip(c).map(|(xv, cv)| xv * cv).sum();
        acc += y * y;
    }
    Ok(acc / valid as f64)
}
