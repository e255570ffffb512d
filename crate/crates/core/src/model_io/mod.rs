//! The `.resot` compact model format, size accounting and DOT export.
//!
//! All multi-byte integers and floats are little-endian.
//!
//! ```text
//! offset size  field
//! 0      4     magic "ROT1"
//! 4      2     u16 version (1)
//! 6      1     u8 depth
//! 7      1     u8 share_bits: 1..=16, or 32 for raw f32 weights (no codebook)
//! 8      1     u8 delta_bits: 1..=16
//! 9      1     u8 leaf_precision: 0 = f32, 1 = u8
//! 10     1     u8 flags: bit 0 = last codebook entry reserved as filler
//! 11     1     reserved, 0
//! 12     4     u32 D (features, bias excluded)
//! 16     4     u32 K (classes)
//! 20     4     u32 entry count E (alive weights plus fillers)
//! 24     ...   codebook: 2^share_bits × f32 (absent when share_bits = 32)
//!              bias: I × f32, one per internal node
//!              deltas: E × delta_bits bits, LSB-first, zero-padded to a byte
//!              codes: E × share_bits bits (32 when raw), LSB-first, padded
//!              leaves: f32 → L × K f32 logits
//!                      u8  → f32 min, f32 step, L × K u8 (logit = min + q·step)
//! ```
//!
//! Alive weights are visited column-first: flat index `col · I + node`. Each
//! entry stores the gap to the previous flat index (the first one counts
//! from 0). A gap wider than `2^delta_bits - 1` is bridged by filler entries
//! that advance by the maximum delta and carry the filler code: the last
//! codebook index, or `0xFFFF_FFFF` in raw mode.

mod bits;
mod dot;

use serde::{Deserialize, Serialize};

use crate::compress::{PruneMask, SharedWeights};
use crate::error::{ResotError, Result};
use crate::train::LeafPrecision;
use crate::tree::ObliqueTree;

use bits::{packed_len, BitReader, BitWriter};

pub use dot::{export_dot, DotOptions};

pub const MAGIC: &[u8; 4] = b"ROT1";
pub const VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 24;
/// `share_bits` value meaning weights are stored as raw `f32` bit patterns.
pub const RAW_BITS: u8 = 32;
const RAW_FILLER: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LeafBlock {
    F32(Vec<f32>),
    U8 { min: f32, step: f32, values: Vec<u8> },
}

impl LeafBlock {
    fn quantize(logits: &[f64], precision: LeafPrecision) -> Self {
        match precision {
            LeafPrecision::F32 => LeafBlock::F32(logits.iter().map(|&v| v as f32).collect()),
            LeafPrecision::U8 => {
                let min = logits.iter().copied().fold(f64::INFINITY, f64::min) as f32;
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max) as f32;
                let step = if max > min { (max - min) / 255.0 } else { 0.0 };
                let values = logits
                    .iter()
                    .map(|&v| if step == 0.0 { 0 } else { ((v as f32 - min) / step).round().clamp(0.0, 255.0) as u8 })
                    .collect();
                LeafBlock::U8 { min, step, values }
            }
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            LeafBlock::F32(v) => v.iter().map(|&x| x as f64).collect(),
            LeafBlock::U8 { min, step, values } => values.iter().map(|&q| (*min + q as f32 * *step) as f64).collect(),
        }
    }

    fn precision(&self) -> LeafPrecision {
        match self {
            LeafBlock::F32(_) => LeafPrecision::F32,
            LeafBlock::U8 { .. } => LeafPrecision::U8,
        }
    }

    fn byte_len(&self) -> usize {
        match self {
            LeafBlock::F32(v) => 4 * v.len(),
            LeafBlock::U8 { values, .. } => 8 + values.len(),
        }
    }
}

/// A model exactly as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedModel {
    pub depth: u8,
    pub features: u32,
    pub classes: u32,
    pub share_bits: u8,
    pub delta_bits: u8,
    pub filler_reserved: bool,
    /// Empty in raw mode.
    pub codebook: Vec<f32>,
    pub bias: Vec<f32>,
    /// `(flat index, code)` of each alive weight in storage order.
    pub entries: Vec<(u32, u32)>,
    pub leaves: LeafBlock,
}

/// Storage options for [`CompressedModel::from_tree`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageOptions {
    pub delta_bits: u8,
    pub leaf_precision: LeafPrecision,
}

impl Default for StorageOptions {
    fn default() -> Self {
        Self { delta_bits: 8, leaf_precision: LeafPrecision::F32 }
    }
}

/// Whether storing `mask` with `delta_bits`-bit deltas needs filler entries.
pub fn needs_filler(mask: &PruneMask, delta_bits: u8) -> bool {
    let internal = mask.alive().nrows();
    let max = (1usize << delta_bits) - 1;
    let mut prev = 0;
    for (i, j) in mask.column_first() {
        let flat = j * internal + i;
        if flat - prev > max {
            return true;
        }
        prev = flat;
    }
    false
}

impl CompressedModel {
    /// Captures `tree` under `mask`. Without `shared`, alive weights are kept
    /// as raw `f32`.
    pub fn from_tree(tree: &ObliqueTree, mask: &PruneMask, shared: Option<&SharedWeights>, opts: StorageOptions) -> Result<Self> {
        if mask.alive().dim() != tree.theta().dim() {
            return Err(ResotError::DimensionMismatch { expected: tree.theta().len(), actual: mask.alive().len() });
        }
        if !(1..=16).contains(&opts.delta_bits) {
            return Err(ResotError::InvalidArgument(format!("delta_bits must be in 1..=16, got {}", opts.delta_bits)));
        }
        if tree.depth() > u8::MAX as usize {
            return Err(ResotError::InvalidArgument("depth does not fit in a byte".into()));
        }
        let internal = tree.internal_count();
        let positions = mask.column_first();
        let (share_bits, codebook, codes, filler_reserved) = match shared {
            Some(s) => {
                if s.codes.len() != positions.len() {
                    return Err(ResotError::DimensionMismatch { expected: positions.len(), actual: s.codes.len() });
                }
                if s.codebook.len() > 1 << s.bits {
                    return Err(ResotError::CodebookOverflow { needed: s.codebook.len(), bits: s.bits });
                }
                let mut codebook = s.codebook.clone();
                codebook.resize(1 << s.bits, 0.0);
                (s.bits, codebook, s.codes.clone(), s.filler_reserved)
            }
            None => {
                let codes = positions.iter().map(|&(i, j)| (tree.theta()[[i, j]] as f32).to_bits()).collect();
                (RAW_BITS, Vec::new(), codes, false)
            }
        };
        let entries: Vec<(u32, u32)> =
            positions.iter().zip(codes).map(|(&(i, j), c)| ((j * internal + i) as u32, c)).collect();
        let bias_col = tree.bias_column();
        let model = CompressedModel {
            depth: tree.depth() as u8,
            features: tree.feature_count() as u32,
            classes: tree.class_count() as u32,
            share_bits,
            delta_bits: opts.delta_bits,
            filler_reserved,
            codebook,
            bias: tree.theta().column(bias_col).iter().map(|&b| b as f32).collect(),
            entries,
            leaves: LeafBlock::quantize(tree.leaf_logits().as_slice().expect("standard layout"), opts.leaf_precision),
        };
        model.stream()?;
        Ok(model)
    }

    pub fn internal_count(&self) -> usize {
        (1usize << self.depth) - 1
    }

    pub fn leaf_count(&self) -> usize {
        1usize << self.depth
    }

    pub fn is_raw(&self) -> bool {
        self.share_bits == RAW_BITS
    }

    fn code_bits(&self) -> u32 {
        self.share_bits as u32
    }

    fn filler_code(&self) -> Option<u32> {
        if self.is_raw() {
            Some(RAW_FILLER)
        } else if self.filler_reserved {
            Some((1u32 << self.share_bits) - 1)
        } else {
            None
        }
    }

    /// The stored `(delta, code)` stream, fillers included.
    fn stream(&self) -> Result<Vec<(u32, u32)>> {
        let max = (1u32 << self.delta_bits) - 1;
        let filler = self.filler_code();
        let mut out = Vec::with_capacity(self.entries.len());
        let mut prev = 0u32;
        for (n, &(flat, code)) in self.entries.iter().enumerate() {
            if n > 0 && flat <= prev {
                return Err(ResotError::Corrupt(format!("flat index {flat} does not increase")));
            }
            if Some(code) == filler {
                return Err(ResotError::Corrupt(format!("alive weight uses the filler code {code}")));
            }
            if !self.is_raw() && code >= 1 << self.share_bits {
                return Err(ResotError::CodebookOverflow { needed: code as usize + 1, bits: self.share_bits });
            }
            let mut gap = flat - prev;
            while gap > max {
                let code = filler.ok_or(ResotError::CodebookOverflow { needed: (1 << self.share_bits) + 1, bits: self.share_bits })?;
                out.push((max, code));
                gap -= max;
            }
            out.push((gap, code));
            prev = flat;
        }
        Ok(out)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let stream = self.stream()?;
        let mut out = Vec::with_capacity(self.size_report()?.total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.depth);
        out.push(self.share_bits);
        out.push(self.delta_bits);
        out.push(match self.leaves.precision() {
            LeafPrecision::F32 => 0,
            LeafPrecision::U8 => 1,
        });
        out.push(u8::from(self.filler_reserved));
        out.push(0);
        out.extend_from_slice(&self.features.to_le_bytes());
        out.extend_from_slice(&self.classes.to_le_bytes());
        out.extend_from_slice(&(stream.len() as u32).to_le_bytes());
        for c in &self.codebook {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for b in &self.bias {
            out.extend_from_slice(&b.to_le_bytes());
        }
        let mut deltas = BitWriter::new();
        let mut codes = BitWriter::new();
        for &(d, c) in &stream {
            deltas.push(d, self.delta_bits as u32);
            codes.push(c, self.code_bits());
        }
        out.extend(deltas.finish());
        out.extend(codes.finish());
        match &self.leaves {
            LeafBlock::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            LeafBlock::U8 { min, step, values } => {
                out.extend_from_slice(&min.to_le_bytes());
                out.extend_from_slice(&step.to_le_bytes());
                out.extend_from_slice(values);
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4, "header")?;
        if magic != MAGIC {
            return Err(ResotError::BadMagic);
        }
        let version = u16::from_le_bytes(cur.take(2, "header")?.try_into().unwrap());
        if version != VERSION {
            return Err(ResotError::UnsupportedVersion(version));
        }
        let depth = cur.u8("header")?;
        let share_bits = cur.u8("header")?;
        let delta_bits = cur.u8("header")?;
        let leaf_precision = match cur.u8("header")? {
            0 => LeafPrecision::F32,
            1 => LeafPrecision::U8,
            other => return Err(ResotError::Corrupt(format!("leaf precision {other}"))),
        };
        let flags = cur.u8("header")?;
        if cur.u8("header")? != 0 {
            return Err(ResotError::Corrupt("reserved header byte is set".into()));
        }
        let features = cur.u32("header")?;
        let classes = cur.u32("header")?;
        let count = cur.u32("header")? as usize;
        if !(1..=20).contains(&depth) {
            return Err(ResotError::Corrupt(format!("depth {depth}")));
        }
        if !(1..=16).contains(&share_bits) && share_bits != RAW_BITS {
            return Err(ResotError::Corrupt(format!("share_bits {share_bits}")));
        }
        if !(1..=16).contains(&delta_bits) {
            return Err(ResotError::Corrupt(format!("delta_bits {delta_bits}")));
        }
        if flags > 1 || (flags == 1 && share_bits == RAW_BITS) {
            return Err(ResotError::Corrupt(format!("flags {flags:#x}")));
        }
        if classes < 2 {
            return Err(ResotError::Corrupt(format!("{classes} classes")));
        }
        let internal = (1usize << depth) - 1;
        let leaves = 1usize << depth;
        let k = if share_bits == RAW_BITS { 0 } else { 1usize << share_bits };
        let codebook = (0..k).map(|_| cur.f32("codebook")).collect::<Result<Vec<_>>>()?;
        let bias = (0..internal).map(|_| cur.f32("bias")).collect::<Result<Vec<_>>>()?;
        let code_bits = share_bits as u32;
        let delta_bytes = cur.take(packed_len(count, delta_bits as u32), "deltas")?;
        let code_bytes = cur.take(packed_len(count, code_bits), "codes")?;
        let leaf_count = leaves
            .checked_mul(classes as usize)
            .ok_or_else(|| ResotError::Corrupt("leaf block size overflow".into()))?;
        let leaf_block = match leaf_precision {
            LeafPrecision::F32 => LeafBlock::F32((0..leaf_count).map(|_| cur.f32("leaves")).collect::<Result<_>>()?),
            LeafPrecision::U8 => {
                let min = cur.f32("leaves")?;
                let step = cur.f32("leaves")?;
                LeafBlock::U8 { min, step, values: cur.take(leaf_count, "leaves")?.to_vec() }
            }
        };
        if cur.pos != bytes.len() {
            return Err(ResotError::Corrupt(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        if codebook.iter().chain(&bias).any(|v| !v.is_finite()) || leaf_block.values().iter().any(|v| !v.is_finite()) {
            return Err(ResotError::NonFinite("stored parameters".into()));
        }

        let mut model = CompressedModel {
            depth,
            features,
            classes,
            share_bits,
            delta_bits,
            filler_reserved: flags == 1,
            codebook,
            bias,
            entries: Vec::with_capacity(count),
            leaves: leaf_block,
        };
        let filler = model.filler_code();
        let max = (1u32 << delta_bits) - 1;
        let limit = internal as u64 * features as u64;
        let mut deltas = BitReader::new(delta_bytes);
        let mut codes = BitReader::new(code_bytes);
        let mut pos: u64 = 0;
        for n in 0..count {
            let delta = deltas.read(delta_bits as u32)?;
            let code = codes.read(code_bits)?;
            if n > 0 && delta == 0 {
                return Err(ResotError::Corrupt(format!("entry {n} does not advance")));
            }
            pos += delta as u64;
            if Some(code) == filler {
                if delta != max {
                    return Err(ResotError::Corrupt(format!("filler entry {n} with delta {delta}")));
                }
                continue;
            }
            if pos >= limit {
                return Err(ResotError::Corrupt(format!("flat index {pos} beyond {limit}")));
            }
            if share_bits == RAW_BITS && !f32::from_bits(code).is_finite() {
                return Err(ResotError::NonFinite(format!("raw weight at entry {n}")));
            }
            model.entries.push((pos as u32, code));
        }
        if !deltas.rest_is_zero() || !codes.rest_is_zero() {
            return Err(ResotError::Corrupt("nonzero padding bits".into()));
        }
        if model.stream()?.len() != count {
            return Err(ResotError::Corrupt("fillers where none were needed".into()));
        }
        Ok(model)
    }

    /// Alive non-bias weights as `(node, column, value)`.
    pub fn weights(&self) -> Vec<(usize, usize, f64)> {
        let internal = self.internal_count();
        self.entries
            .iter()
            .map(|&(flat, code)| {
                let v = if self.is_raw() { f32::from_bits(code) } else { self.codebook[code as usize] };
                (flat as usize % internal, flat as usize / internal, v as f64)
            })
            .collect()
    }

    pub fn mask(&self) -> PruneMask {
        let internal = self.internal_count();
        let d = self.features as usize;
        let mut alive = ndarray::Array2::from_elem((internal, d + 1), false);
        alive.column_mut(d).fill(true);
        for (i, j, _) in self.weights() {
            alive[[i, j]] = true;
        }
        PruneMask::from_array(alive).expect("bias column set")
    }

    pub fn shared(&self) -> Option<SharedWeights> {
        if self.is_raw() {
            return None;
        }
        let mut used = vec![false; self.codebook.len()];
        let codes: Vec<u32> = self.entries.iter().map(|&(_, c)| c).collect();
        codes.iter().for_each(|&c| used[c as usize] = true);
        Some(SharedWeights {
            bits: self.share_bits,
            codebook: self.codebook.clone(),
            codes,
            used,
            filler_reserved: self.filler_reserved,
        })
    }

    /// Rebuilds the tree; names default to `f0, f1, …`.
    pub fn to_tree(&self, feature_names: Option<Vec<String>>) -> Result<ObliqueTree> {
        let d = self.features as usize;
        let names = feature_names.unwrap_or_else(|| (0..d).map(|j| format!("f{j}")).collect());
        let mut theta = ndarray::Array2::zeros((self.internal_count(), d + 1));
        for (i, b) in self.bias.iter().enumerate() {
            theta[[i, d]] = *b as f64;
        }
        for (i, j, v) in self.weights() {
            theta[[i, j]] = v;
        }
        let leaves = ndarray::Array2::from_shape_vec((self.leaf_count(), self.classes as usize), self.leaves.values())
            .map_err(|e| ResotError::Corrupt(e.to_string()))?;
        ObliqueTree::from_parts(self.depth as usize, theta, leaves, names)
    }

    pub fn size_report(&self) -> Result<SizeReport> {
        let stream = self.stream()?;
        let internal = self.internal_count();
        let leaves = self.leaves.byte_len();
        let report = SizeReport {
            header: HEADER_BYTES,
            codebook: 4 * self.codebook.len(),
            bias: 4 * internal,
            indices: packed_len(stream.len(), self.delta_bits as u32),
            codes: packed_len(stream.len(), self.code_bits()),
            leaves,
            total: 0,
            fillers: stream.len() - self.entries.len(),
            alive: self.entries.len(),
            dense_equivalent: internal * (self.features as usize + 1) * 4 + self.leaf_count() * self.classes as usize * 4,
        };
        Ok(SizeReport {
            total: report.header + report.codebook + report.bias + report.indices + report.codes + report.leaves,
            ..report
        })
    }
}

/// Byte breakdown of an encoded model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeReport {
    pub header: usize,
    pub codebook: usize,
    pub bias: usize,
    pub indices: usize,
    pub codes: usize,
    pub leaves: usize,
    pub total: usize,
    pub fillers: usize,
    pub alive: usize,
    /// All of `theta` plus `f32` leaf logits, uncompressed.
    pub dense_equivalent: usize,
}

impl SizeReport {
    pub fn ratio(&self) -> f64 {
        self.dense_equivalent as f64 / self.total as f64
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(ResotError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &'static str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// `encode(tree, mask, shared)`.
pub fn encode(tree: &ObliqueTree, mask: &PruneMask, shared: Option<&SharedWeights>, opts: StorageOptions) -> Result<Vec<u8>> {
    CompressedModel::from_tree(tree, mask, shared, opts)?.encode()
}

/// `decode(bytes) -> (tree, mask, shared)`.
pub fn decode(bytes: &[u8]) -> Result<(ObliqueTree, PruneMask, Option<SharedWeights>)> {
    let m = CompressedModel::decode(bytes)?;
    Ok((m.to_tree(None)?, m.mask(), m.shared()))
}

pub fn write_model(path: &std::path::Path, model: &CompressedModel) -> Result<()> {
    std::fs::write(path, model.encode()?)?;
    Ok(())
}

pub fn read_model(path: &std::path::Path) -> Result<CompressedModel> {
    CompressedModel::decode(&std::fs::read(path)?)
}
