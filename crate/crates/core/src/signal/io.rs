//! Multi-channel recording I/O: CSV and the `RSIG` raw binary format.
//!
//! `RSIG` layout (all little-endian):
//!
//! ```text
//! offset size  field
//! 0      4     magic "RSIG"
//! 4      4     u32 channel count
//! 8      4     u32 sample rate (Hz)
//! 12     8     u64 sample count per channel
//! 20     ...   f32 samples, frame-interleaved (all channels of sample 0, then sample 1, ...)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array2};

use super::SignalWindow;
use crate::error::{ResotError, Result};

pub const RSIG_MAGIC: &[u8; 4] = b"RSIG";

/// A continuous recording, `channels × samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub channel_names: Vec<String>,
    pub sample_rate: f64,
    pub data: Array2<f64>,
}

impl Recording {
    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    /// Non-overlapping consecutive windows of `len` samples; a trailing partial
    /// window is dropped.
    pub fn windows(&self, len: usize) -> Result<Vec<SignalWindow>> {
        self.windows_with_hop(len, len)
    }

    pub fn windows_with_hop(&self, len: usize, hop: usize) -> Result<Vec<SignalWindow>> {
        if len < 2 || hop == 0 {
            return Err(ResotError::InvalidArgument(format!("window {len} / hop {hop}")));
        }
        let mut out = Vec::new();
        let mut start = 0;
        while start + len <= self.samples() {
            let w = self.data.slice(s![.., start..start + len]).to_owned();
            out.push(SignalWindow::new(w, self.sample_rate)?);
            start += hop;
        }
        Ok(out)
    }
}

/// Reads a CSV with a header row of channel names and one column per channel.
pub fn read_csv<R: Read>(reader: R, sample_rate: f64) -> Result<Recording> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let channel_names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let channels = channel_names.len();
    if channels == 0 {
        return Err(ResotError::Parse("CSV has no columns".into()));
    }
    let mut frames: Vec<f64> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != channels {
            return Err(ResotError::Parse(format!("row {} has {} fields, expected {channels}", row + 1, rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| ResotError::Parse(format!("row {}: `{field}` is not a number", row + 1)))?;
            if !v.is_finite() {
                return Err(ResotError::NonFinite(format!("row {}", row + 1)));
            }
            frames.push(v);
        }
    }
    let n = frames.len() / channels;
    let data = Array2::from_shape_vec((n, channels), frames)
        .expect("frame count is consistent")
        .reversed_axes()
        .as_standard_layout()
        .to_owned();
    Ok(Recording { channel_names, sample_rate, data })
}

pub fn write_csv<W: Write>(writer: W, rec: &Recording) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&rec.channel_names)?;
    for t in 0..rec.samples() {
        w.write_record(rec.data.column(t).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rsig<R: Read>(mut reader: R) -> Result<Recording> {
    let mut header = [0u8; 20];
    reader.read_exact(&mut header).map_err(|_| ResotError::Truncated("RSIG header"))?;
    if &header[0..4] != RSIG_MAGIC {
        return Err(ResotError::BadMagic);
    }
    let channels = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let rate = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let samples = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
    if channels == 0 || rate == 0 {
        return Err(ResotError::Corrupt("RSIG header has zero channels or sample rate".into()));
    }
    let total = channels
        .checked_mul(samples)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| ResotError::Corrupt("RSIG size overflow".into()))?;
    let mut raw = vec![0u8; total];
    reader.read_exact(&mut raw).map_err(|_| ResotError::Truncated("RSIG samples"))?;
    let mut data = Array2::zeros((channels, samples));
    for (k, chunk) in raw.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(ResotError::NonFinite(format!("RSIG sample {k}")));
        }
        data[[k % channels, k / channels]] = v;
    }
    let channel_names = (0..channels).map(|c| format!("ch{c}")).collect();
    Ok(Recording { channel_names, sample_rate: rate as f64, data })
}

pub fn write_rsig<W: Write>(mut writer: W, rec: &Recording) -> Result<()> {
    writer.write_all(RSIG_MAGIC)?;
    writer.write_all(&(rec.channels() as u32).to_le_bytes())?;
    writer.write_all(&(rec.sample_rate.round() as u32).to_le_bytes())?;
    writer.write_all(&(rec.samples() as u64).to_le_bytes())?;
    for t in 0..rec.samples() {
        for c in 0..rec.channels() {
            writer.write_all(&(rec.data[[c, t]] as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads `.rsig` files as RSIG and anything else as CSV (which needs `sample_rate`).
pub fn read_recording(path: &Path, sample_rate: Option<f64>) -> Result<Recording> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("rsig")) {
        read_rsig(file)
    } else {
        let fs = sample_rate.ok_or_else(|| {
            ResotError::InvalidArgument("CSV recordings need an explicit sample rate".into())
        })?;
        read_csv(file, fs)
    }
}
