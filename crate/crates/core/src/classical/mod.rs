//! Baseline digital chain: block-transform source coding, rate-1/2 LDPC,
//! BPSK over the AWGN channel, and macroblock concealment at the receiver.

pub mod bpsk;
pub mod huffman;
pub mod ldpc;
pub mod source;

use serde::{Deserialize, Serialize};

pub use bpsk::{bpsk_demodulate, bpsk_modulate, hard_decision};
pub use ldpc::{ldpc_decode, ldpc_encode, LdpcCode, LdpcParams};
pub use source::{source_decode, source_decode_with_reference, source_encode, Bitstream, GopDims};

use crate::channel::{awgn, ChannelConfig};
use crate::error::Result;
use crate::video::{Frame, Gop};
use crate::TxStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassicalConfig {
    /// Quantizer step in 8-bit sample units.
    pub qp: f64,
    pub ldpc: LdpcParams,
    pub max_iters: usize,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            qp: 8.0,
            ldpc: LdpcParams::default(),
            max_iters: 50,
        }
    }
}

fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1)))
        .collect()
}

/// Sends one GOP through source coding, LDPC, BPSK and the channel.
///
/// `reference` is the last decoded frame of the previous GOP, used to conceal
/// macroblocks of this GOP's first frame. If the bitstream header itself is
/// lost, the whole GOP is concealed.
pub fn classical_transmit(
    gop: &Gop,
    ch: &ChannelConfig,
    qp: f64,
    code: &LdpcCode,
    max_iters: usize,
    reference: Option<&Frame>,
) -> Result<(Gop, TxStats)> {
    let bs = source_encode(gop, qp)?;
    let info = bytes_to_bits(&bs.bytes);
    let coded = ldpc_encode(&info, code);
    let tx = bpsk_modulate(&coded.bits);
    let rx = awgn(&tx, ch);
    let llrs = bpsk_demodulate(&rx.symbols, ch.noise_variance());
    let decoded = ldpc_decode(&llrs, code, max_iters)?;
    let received = bits_to_bytes(&decoded.bits[..info.len()]);
    let dims = GopDims::of(gop);
    let rx_stream = Bitstream {
        bytes: received,
        block_map: bs.block_map.clone(),
    };
    let (out, concealed) = match source_decode_with_reference(&rx_stream, dims, reference) {
        Ok(d) => (d.gop, d.concealed_blocks),
        Err(_) => {
            let (w, h) = gop.dims();
            let fill = match reference {
                Some(f) => f.clone(),
                None => Frame::filled(w, h, [0.5; 3])?,
            };
            let mbs = w.div_ceil(source::MB) * h.div_ceil(source::MB) * gop.len();
            (Gop::new(vec![fill; gop.len()])?, mbs)
        }
    };
    let stats = TxStats {
        payload_bits: info.len() as u64,
        channel_symbols: coded.bits.len() as u64,
        air_bits: coded.bits.len() as u64,
        side_info_bits: 0,
        wireless_delay_seconds: 0.0,
        decode_failures: decoded.failed_blocks as u64,
        concealed_blocks: concealed as u64,
    };
    Ok((out, stats))
}

/// Air bits `classical_transmit` would spend on `gop`, without sending it.
pub fn classical_air_bits(gop: &Gop, qp: f64, code: &LdpcCode) -> Result<u64> {
    let bits = source_encode(gop, qp)?.bit_len();
    Ok((bits.div_ceil(code.k()) * code.n()) as u64)
}

/// Source coding only, no channel: the quality ceiling of the chain.
pub fn source_only(gop: &Gop, qp: f64) -> Result<(Gop, u64)> {
    let bs = source_encode(gop, qp)?;
    let bits = bs.bit_len() as u64;
    Ok((source_decode(&bs, GopDims::of(gop))?.gop, bits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn air_bit_estimate_matches_transmission() {
        let frames = (0..2)
            .map(|t| Frame::from_fn(24, 16, |x, y| [(x + t) as f64 / 30.0, y as f64 / 16.0, 0.4]).unwrap())
            .collect();
        let gop = Gop::new(frames).unwrap();
        let code = LdpcCode::new(LdpcParams::default()).unwrap();
        let ch = ChannelConfig::new(20.0, 1).unwrap();
        let (_, stats) = classical_transmit(&gop, &ch, 8.0, &code, 50, None).unwrap();
        assert_eq!(classical_air_bits(&gop, 8.0, &code).unwrap(), stats.air_bits);
    }

    #[test]
    fn bit_packing_round_trips() {
        let bytes = vec![0xA5, 0x00, 0xFF, 0x3C];
        assert_eq!(bits_to_bytes(&bytes_to_bits(&bytes)), bytes);
    }
}
