//! Shared binary conventions for persisted client state and aggregates:
//! a version byte, a kind byte, little-endian fixed-width fields, and bit
//! tables packed 8 per byte (LSB first, zero padding).

use crate::error::{Error, Result};

pub(crate) const STATE_VERSION: u8 = 1;
pub(crate) const KIND_MEAN_STATE: u8 = 0;
pub(crate) const KIND_HIST_STATE: u8 = 1;
pub(crate) const KIND_MEAN_AGGREGATE: u8 = 2;
pub(crate) const KIND_HIST_AGGREGATE: u8 = 3;

/// Refuse to allocate tables past this many entries when loading untrusted
/// bytes.
pub(crate) const MAX_TABLE_ENTRIES: u64 = 1 << 28;

/// Append bits packed 8 per byte, LSB first; trailing pad bits are zero.
pub(crate) fn pack_bits(bits: &[bool], out: &mut Vec<u8>) {
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (i, &bit) in chunk.iter().enumerate() {
            if bit {
                byte |= 1 << i;
            }
        }
        out.push(byte);
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::CorruptState("truncated stream"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn expect_header(&mut self, kind: u8) -> Result<()> {
        let header = self.take(2)?;
        if header[0] != STATE_VERSION {
            return Err(Error::UnsupportedVersion(header[0]));
        }
        if header[1] != kind {
            return Err(Error::CorruptState("stream kind mismatch"));
        }
        Ok(())
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn bits(&mut self, count: usize) -> Result<Vec<bool>> {
        let bytes = self.take(count.div_ceil(8))?;
        let mut bits = Vec::with_capacity(count);
        for i in 0..count {
            bits.push(bytes[i / 8] >> (i % 8) & 1 == 1);
        }
        // Pad bits must be zero so every state has exactly one encoding.
        let pad_shift = count % 8;
        if pad_shift != 0 && bytes[bytes.len() - 1] >> pad_shift != 0 {
            return Err(Error::CorruptState("nonzero padding bits"));
        }
        Ok(bits)
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::CorruptState("trailing bytes"));
        }
        Ok(())
    }
}
