//! Canonical prefix codes and MSB-first bit I/O.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    used: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, value: u64, bits: u32) {
        debug_assert!(bits <= 57);
        if bits == 0 {
            return;
        }
        self.acc = (self.acc << bits) | (value & ((1u64 << bits) - 1));
        self.used += bits;
        while self.used >= 8 {
            self.used -= 8;
            self.bytes.push((self.acc >> self.used) as u8);
        }
        self.acc &= (1u64 << self.used) - 1;
    }

    /// Pads the final partial byte with one-bits.
    pub fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            let pad = 8 - self.used;
            self.put((1u64 << pad) - 1, pad);
        }
        self.bytes
    }
}

#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn bit(&mut self) -> Option<u32> {
        let byte = *self.bytes.get(self.pos / 8)?;
        let b = (byte >> (7 - self.pos % 8)) & 1;
        self.pos += 1;
        Some(b as u32)
    }

    pub fn bits(&mut self, n: u32) -> Option<u64> {
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | self.bit()? as u64;
        }
        Some(v)
    }
}

/// Optimal code lengths for the given frequencies; symbols with zero count get
/// length 0. A single used symbol gets length 1.
pub fn code_lengths(freqs: &[u64]) -> Vec<u8> {
    let mut lengths = vec![0u8; freqs.len()];
    let used: Vec<usize> = (0..freqs.len()).filter(|&i| freqs[i] > 0).collect();
    match used.len() {
        0 => return lengths,
        1 => {
            lengths[used[0]] = 1;
            return lengths;
        }
        _ => {}
    }
    // nodes: leaves then internal; parent links give depths
    let mut parent: Vec<usize> = vec![usize::MAX; used.len()];
    let mut heap = BinaryHeap::new();
    for (node, &sym) in used.iter().enumerate() {
        heap.push(Reverse((freqs[sym], node)));
    }
    while heap.len() > 1 {
        let Reverse((fa, a)) = heap.pop().unwrap();
        let Reverse((fb, b)) = heap.pop().unwrap();
        let id = parent.len();
        parent.push(usize::MAX);
        parent[a] = id;
        parent[b] = id;
        heap.push(Reverse((fa + fb, id)));
    }
    for (node, &sym) in used.iter().enumerate() {
        let mut depth = 0u8;
        let mut n = node;
        while parent[n] != usize::MAX {
            n = parent[n];
            depth += 1;
        }
        lengths[sym] = depth;
    }
    lengths
}

/// Canonical code table derived from code lengths alone.
#[derive(Debug, Clone)]
pub struct CanonicalCode {
    codes: Vec<(u64, u8)>,
    // decoding: symbols ordered by (length, symbol)
    sorted: Vec<usize>,
    first_code: Vec<u64>,
    first_index: Vec<usize>,
    count: Vec<usize>,
}

impl CanonicalCode {
    pub fn from_lengths(lengths: &[u8]) -> Option<Self> {
        let max_len = lengths.iter().copied().max().unwrap_or(0) as usize;
        if max_len > 63 {
            return None;
        }
        let mut count = vec![0usize; max_len + 1];
        for &l in lengths.iter().filter(|&&l| l > 0) {
            count[l as usize] += 1;
        }
        // Kraft inequality
        let kraft: f64 = (1..=max_len).map(|l| count[l] as f64 / (1u64 << l) as f64).sum();
        if kraft > 1.0 + 1e-12 {
            return None;
        }
        let mut sorted: Vec<usize> = (0..lengths.len()).filter(|&s| lengths[s] > 0).collect();
        sorted.sort_by_key(|&s| (lengths[s], s));
        let mut codes = vec![(0u64, 0u8); lengths.len()];
        let mut first_code = vec![0u64; max_len + 1];
        let mut first_index = vec![0usize; max_len + 1];
        let mut code = 0u64;
        let mut idx = 0usize;
        for l in 1..=max_len {
            first_code[l] = code;
            first_index[l] = idx;
            for &s in &sorted[idx..idx + count[l]] {
                codes[s] = (code, l as u8);
                code += 1;
            }
            idx += count[l];
            code <<= 1;
        }
        Some(Self {
            codes,
            sorted,
            first_code,
            first_index,
            count,
        })
    }

    pub fn encode(&self, w: &mut BitWriter, symbol: usize) {
        let (code, len) = self.codes[symbol];
        debug_assert!(len > 0, "symbol {symbol} has no code");
        w.put(code, len as u32);
    }

    pub fn decode(&self, r: &mut BitReader<'_>) -> Option<usize> {
        let mut code = 0u64;
        for l in 1..self.count.len() {
            code = (code << 1) | r.bit()? as u64;
            let offset = code.wrapping_sub(self.first_code[l]);
            if code >= self.first_code[l] && (offset as usize) < self.count[l] {
                return Some(self.sorted[self.first_index[l] + offset as usize]);
            }
        }
        None
    }
}

/// CRC-16/CCITT-FALSE.
pub fn crc16(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in data {
        crc ^= (b as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
    }
    crc
}
