//! Fixed-rate base-L packing. Symbols are grouped `g` at a time into one
//! base-L number (first symbol most significant) written MSB-first in the
//! fewest bits that hold `L^g − 1`; `g` is the smallest group size whose
//! overhead over `log2 L` bits/symbol is below 1%.

use crate::error::{Error, Result};

const MAX_OVERHEAD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupLayout {
    pub levels: usize,
    /// Symbols per group.
    pub symbols: usize,
    /// Bits per group.
    pub bits: u32,
    /// `L^g`, one past the largest valid group value.
    pub limit: u128,
}

impl GroupLayout {
    pub fn for_levels(levels: usize) -> Result<Self> {
        if !(2..=255).contains(&levels) {
            return Err(Error::Config(format!("cannot pack {levels} levels (need 2..=255)")));
        }
        let ideal = (levels as f64).log2();
        let mut limit: u128 = 1;
        for symbols in 1.. {
            limit = limit
                .checked_mul(levels as u128)
                .ok_or_else(|| Error::Config(format!("no group size within 128 bits for L = {levels}")))?;
            let bits = 128 - (limit - 1).leading_zeros();
            if f64::from(bits) / (symbols as f64 * ideal) - 1.0 < MAX_OVERHEAD {
                return Ok(Self { levels, symbols, bits, limit });
            }
        }
        unreachable!()
    }

    pub fn bits_per_symbol(&self) -> f64 {
        f64::from(self.bits) / self.symbols as f64
    }

    /// Payload bytes for `count` symbols.
    pub fn payload_len(&self, count: usize) -> usize {
        let groups = count.div_ceil(self.symbols);
        (groups * self.bits as usize).div_ceil(8)
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    fn push(&mut self, value: u128, bits: u32) {
        for i in (0..bits).rev() {
            if self.used == 0 {
                self.bytes.push(0);
            }
            let bit = ((value >> i) & 1) as u8;
            *self.bytes.last_mut().expect("pushed above") |= bit << (7 - self.used);
            self.used = (self.used + 1) % 8;
        }
    }
}

pub fn pack_symbols(symbols: &[u8], levels: usize) -> Result<Vec<u8>> {
    let layout = GroupLayout::for_levels(levels)?;
    if let Some(&bad) = symbols.iter().find(|&&s| usize::from(s) >= levels) {
        return Err(Error::Domain(format!("symbol {bad} out of range for L = {levels}")));
    }
    let mut w = BitWriter { bytes: Vec::with_capacity(layout.payload_len(symbols.len())), used: 0 };
    for group in symbols.chunks(layout.symbols) {
        let mut value: u128 = 0;
        for i in 0..layout.symbols {
            value = value * levels as u128 + group.get(i).map_or(0, |&s| u128::from(s));
        }
        w.push(value, layout.bits);
    }
    Ok(w.bytes)
}

pub fn unpack_symbols(payload: &[u8], count: usize, levels: usize) -> Result<Vec<u8>> {
    let layout = GroupLayout::for_levels(levels)?;
    let expected = layout.payload_len(count);
    if payload.len() != expected {
        return Err(Error::Corruption(format!("payload of {} bytes, {count} symbols need {expected}", payload.len())));
    }
    let mut out = Vec::with_capacity(count);
    let mut digits = vec![0u8; layout.symbols];
    let mut bitpos = 0usize;
    while out.len() < count {
        let mut value: u128 = 0;
        for _ in 0..layout.bits {
            let bit = (payload[bitpos / 8] >> (7 - bitpos % 8)) & 1;
            value = (value << 1) | u128::from(bit);
            bitpos += 1;
        }
        if value >= layout.limit {
            return Err(Error::Corruption(format!("group value {value} ≥ {}", layout.limit)));
        }
        for d in digits.iter_mut().rev() {
            *d = (value % levels as u128) as u8;
            value /= levels as u128;
        }
        let take = layout.symbols.min(count - out.len());
        out.extend_from_slice(&digits[..take]);
    }
    Ok(out)
}

/// 2 bits per switch, MSB-first.
pub fn pack_switches(switches: &[u8]) -> Result<Vec<u8>> {
    pack_symbols(switches, 4)
}

pub fn unpack_switches(payload: &[u8], count: usize) -> Result<Vec<u8>> {
    unpack_symbols(payload, count, 4)
}
