//! Least-significant-bit-first bit packing.
//!
//! Bit `i` of a written value lands at bit `(cursor + i) % 8` of byte
//! `(cursor + i) / 8`. The decoder's hot loop extracts a field with one
//! shift and one mask.

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub(crate) struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    acc_bits: u32,
    total_bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `nbits` bits of `value`, LSB first.
    pub fn write(&mut self, value: u32, nbits: u8) {
        debug_assert!(nbits <= 32);
        debug_assert!(nbits == 32 || u64::from(value) < (1u64 << nbits));
        self.acc |= u64::from(value) << self.acc_bits;
        self.acc_bits += u32::from(nbits);
        self.total_bits += u64::from(nbits);
        while self.acc_bits >= 8 {
            self.bytes.push(self.acc as u8);
            self.acc >>= 8;
            self.acc_bits -= 8;
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.total_bits
    }

    /// Flushes the final partial byte (zero-padded high bits) and returns
    /// the payload.
    pub fn finish(mut self) -> Vec<u8> {
        if self.acc_bits > 0 {
            self.bytes.push(self.acc as u8);
        }
        self.bytes
    }
}

#[derive(Debug)]
pub(crate) struct BitReader<'a> {
    bytes: &'a [u8],
    byte_pos: usize,
    acc: u64,
    acc_bits: u32,
    consumed: u64,
    bit_len: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], bit_len: u64) -> Result<Self> {
        if bit_len > 8 * bytes.len() as u64 {
            return Err(Error::CorruptStream("payload shorter than bit length"));
        }
        Ok(Self {
            bytes,
            byte_pos: 0,
            acc: 0,
            acc_bits: 0,
            consumed: 0,
            bit_len,
        })
    }

    /// Reads `nbits` bits, LSB first. `nbits == 0` is a valid read of value 0.
    pub fn read(&mut self, nbits: u8) -> Result<u32> {
        let n = u32::from(nbits);
        if self.consumed + u64::from(n) > self.bit_len {
            return Err(Error::CorruptStream("bit underrun"));
        }
        // In-bounds: consumed + n <= bit_len <= 8 * bytes.len(), so the refill
        // loop never walks past the end of the payload.
        while self.acc_bits < n {
            self.acc |= u64::from(self.bytes[self.byte_pos]) << self.acc_bits;
            self.byte_pos += 1;
            self.acc_bits += 8;
        }
        let value = (self.acc & ((1u64 << n) - 1)) as u32;
        self.acc >>= n;
        self.acc_bits -= n;
        self.consumed += u64::from(n);
        Ok(value)
    }

    pub fn bits_consumed(&self) -> u64 {
        self.consumed
    }
}
