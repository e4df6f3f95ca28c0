//! BPSK mapping (0 → +1, 1 → −1) and soft demodulation.

use crate::channel::SymbolBlock;

/// Magnitude returned when the noise variance is zero.
pub const MAX_LLR: f64 = 1e6;

pub fn bpsk_modulate(bits: &[u8]) -> SymbolBlock {
    SymbolBlock::new(
        bits.iter()
            .map(|&b| if b & 1 == 0 { 1.0 } else { -1.0 })
            .collect(),
    )
}

/// Per-symbol LLR `2y/σ²`; positive favors bit 0. A zero (or negative)
/// variance yields a clamped `±MAX_LLR` by the sign of `y`.
pub fn bpsk_demodulate(symbols: &[f64], noise_variance: f64) -> Vec<f64> {
    symbols
        .iter()
        .map(|&y| {
            if noise_variance > 0.0 {
                (2.0 * y / noise_variance).clamp(-MAX_LLR, MAX_LLR)
            } else if y == 0.0 {
                0.0
            } else {
                MAX_LLR.copysign(y)
            }
        })
        .collect()
}

pub fn hard_decision(llrs: &[f64]) -> Vec<u8> {
    llrs.iter().map(|&l| (l < 0.0) as u8).collect()
}
