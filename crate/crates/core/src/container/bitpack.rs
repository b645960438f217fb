//! Fixed-width little-endian bit packing of codes.
//!
//! Code `i` occupies stream bits `[i*b, (i+1)*b)`; stream bit `j` is bit
//! `j % 8` of byte `j / 8`. Unused high bits of the final byte are zero.

use crate::error::{Error, Result};

pub const MAX_BIT_WIDTH: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedPayload {
    bit_width: u32,
    code_count: usize,
    bytes: Vec<u8>,
}

#[inline]
fn packed_len(count: usize, b: u32) -> usize {
    (count * b as usize).div_ceil(8)
}

impl PackedPayload {
    /// Validates raw bytes read from storage.
    pub fn from_parts(bit_width: u32, code_count: usize, bytes: Vec<u8>) -> Result<Self> {
        if !(1..=MAX_BIT_WIDTH).contains(&bit_width) {
            return Err(Error::corrupt(format!("bit width {bit_width} outside 1..={MAX_BIT_WIDTH}")));
        }
        let need = code_count
            .checked_mul(bit_width as usize)
            .map(|bits| bits.div_ceil(8))
            .ok_or_else(|| Error::corrupt("packed size overflows"))?;
        if bytes.len() != need {
            return Err(Error::corrupt(format!(
                "{code_count} codes of {bit_width} bits need {need} bytes, found {}",
                bytes.len()
            )));
        }
        let used = (code_count * bit_width as usize) % 8;
        if used != 0 && bytes[need - 1] >> used != 0 {
            return Err(Error::corrupt("non-zero padding bits after last code"));
        }
        Ok(Self { bit_width, code_count, bytes })
    }

    #[inline]
    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    #[inline]
    pub fn code_count(&self) -> usize {
        self.code_count
    }

    #[inline]
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    /// Random access to code `i`.
    #[inline]
    pub fn get(&self, i: usize) -> u32 {
        debug_assert!(i < self.code_count);
        let bit = i * self.bit_width as usize;
        let byte = bit / 8;
        let shift = (bit % 8) as u32;
        let word = if byte + 8 <= self.bytes.len() {
            u64::from_le_bytes(self.bytes[byte..byte + 8].try_into().unwrap())
        } else {
            let mut buf = [0u8; 8];
            let tail = &self.bytes[byte..];
            buf[..tail.len()].copy_from_slice(tail);
            u64::from_le_bytes(buf)
        };
        ((word >> shift) & mask(self.bit_width)) as u32
    }
}

#[inline]
fn mask(b: u32) -> u64 {
    (1u64 << b) - 1
}

/// Packs `codes` at `bit_width` bits each.
pub fn pack_codes(codes: &[u32], bit_width: u32) -> Result<PackedPayload> {
    if !(1..=MAX_BIT_WIDTH).contains(&bit_width) {
        return Err(Error::param(format!("bit width {bit_width} outside 1..={MAX_BIT_WIDTH}")));
    }
    let limit = mask(bit_width);
    let mut bytes = Vec::with_capacity(packed_len(codes.len(), bit_width));
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for (i, &c) in codes.iter().enumerate() {
        if c as u64 > limit {
            return Err(Error::param(format!("code {c} at index {i} does not fit in {bit_width} bits")));
        }
        acc |= (c as u64) << filled;
        filled += bit_width;
        while filled >= 8 {
            bytes.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        bytes.push(acc as u8);
    }
    Ok(PackedPayload { bit_width, code_count: codes.len(), bytes })
}

/// Inverse of [`pack_codes`].
pub fn unpack_codes(p: &PackedPayload) -> Result<Vec<u32>> {
    if p.bytes.len() != packed_len(p.code_count, p.bit_width) {
        return Err(Error::corrupt("packed payload is truncated"));
    }
    let m = mask(p.bit_width);
    let mut out = Vec::with_capacity(p.code_count);
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    let mut bytes = p.bytes.iter();
    for _ in 0..p.code_count {
        while filled < p.bit_width {
            let b = *bytes.next().ok_or_else(|| Error::corrupt("packed payload is truncated"))?;
            acc |= (b as u64) << filled;
            filled += 8;
        }
        out.push((acc & m) as u32);
        acc >>= p.bit_width;
        filled -= p.bit_width;
    }
    Ok(out)
}
