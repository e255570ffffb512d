//! LSB-first bit packing.

use crate::error::{ResotError, Result};

#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `width` bits of `value`.
    pub fn push(&mut self, value: u32, width: u32) {
        debug_assert!(width == 32 || value >> width == 0, "{value} does not fit in {width} bits");
        for b in 0..width {
            if self.bit == 0 {
                self.bytes.push(0);
            }
            if (value >> b) & 1 == 1 {
                *self.bytes.last_mut().expect("pushed above") |= 1 << self.bit;
            }
            self.bit = (self.bit + 1) % 8;
        }
    }

    /// Zero-pads to a byte boundary.
    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn read(&mut self, width: u32) -> Result<u32> {
        let mut v = 0u32;
        for b in 0..width {
            let byte = self.bytes.get(self.pos / 8).ok_or(ResotError::Truncated("bit stream"))?;
            if (byte >> (self.pos % 8)) & 1 == 1 {
                v |= 1 << b;
            }
            self.pos += 1;
        }
        Ok(v)
    }

    /// Whether every bit after the current position is zero.
    pub fn rest_is_zero(&self) -> bool {
        let full = self.pos.div_ceil(8);
        let partial = !self.pos.is_multiple_of(8) && self.bytes[self.pos / 8] >> (self.pos % 8) != 0;
        !partial && self.bytes[full.min(self.bytes.len())..].iter().all(|&b| b == 0)
    }
}

/// Bytes needed for `count` values of `width` bits.
pub fn packed_len(count: usize, width: u32) -> usize {
    (count * width as usize).div_ceil(8)
}
