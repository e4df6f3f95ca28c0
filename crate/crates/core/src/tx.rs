use serde::{Deserialize, Serialize};

/// Accounting for one wireless transmission.
///
/// `payload_bits` is what the chain hands to the physical layer: the source
/// bitstream for the digital chain, bits-equivalent of the analog symbols plus
/// side information for the semantic chain. `air_bits` is what occupies the
/// link and drives the wireless delay.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TxStats {
    pub payload_bits: u64,
    pub channel_symbols: u64,
    pub air_bits: u64,
    pub side_info_bits: u64,
    pub wireless_delay_seconds: f64,
    pub decode_failures: u64,
    pub concealed_blocks: u64,
}

impl TxStats {
    pub fn accumulate(&mut self, other: &TxStats) {
        self.payload_bits += other.payload_bits;
        self.channel_symbols += other.channel_symbols;
        self.air_bits += other.air_bits;
        self.side_info_bits += other.side_info_bits;
        self.wireless_delay_seconds += other.wireless_delay_seconds;
        self.decode_failures += other.decode_failures;
        self.concealed_blocks += other.concealed_blocks;
    }
}
