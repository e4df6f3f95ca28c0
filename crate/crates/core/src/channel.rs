//! Real-valued baseband AWGN channel.
//!
//! SNR is per symbol: after power normalization each symbol has unit mean
//! square and the noise variance is `10^(-snr_db / 10)`. Noise comes from
//! ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64`) through the
//! `rand_distr` ziggurat standard normal. Each transmission derives its own
//! stream from `(seed, stream)` with a SplitMix64 mix, so runs are
//! reproducible and independent transmissions never share generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// `+inf` (written `"inf"` in JSON) is a noiseless link.
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(snr_db: f64, seed: u64) -> Result<Self> {
        // +inf is a noiseless link; NaN and -inf have no meaning.
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("invalid SNR {snr_db}")));
        }
        Ok(Self { snr_db, seed })
    }

    pub fn noise_variance(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    /// Same SNR, independent noise stream.
    pub fn substream(&self, stream: u64) -> Self {
        Self {
            snr_db: self.snr_db,
            seed: mix_seed(self.seed, stream),
        }
    }
}

/// JSON has no infinity literal, so an infinite SNR travels as `"inf"`.
pub mod snr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                other => Err(serde::de::Error::custom(format!("invalid SNR {other:?}"))),
            },
        }
    }
}

/// SplitMix64 finalizer over `seed ^ stream`-derived state.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolBlock {
    pub symbols: Vec<f64>,
    /// Factor the original symbols were divided by during normalization.
    pub scale: f64,
}

impl SymbolBlock {
    pub fn new(symbols: Vec<f64>) -> Self {
        Self { symbols, scale: 1.0 }
    }

    pub fn power(&self) -> f64 {
        mean_square(&self.symbols)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

fn mean_square(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64
}

/// Scales the block to unit mean-square power and records the factor.
pub fn normalize_power(block: &SymbolBlock) -> Result<SymbolBlock> {
    if block.is_empty() {
        return Err(Error::Empty("symbol block"));
    }
    let p = block.power();
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(
            "cannot normalize an all-zero or non-finite symbol block".into(),
        ));
    }
    let scale = p.sqrt();
    Ok(SymbolBlock {
        symbols: block.symbols.iter().map(|s| s / scale).collect(),
        scale: block.scale * scale,
    })
}

/// Adds white Gaussian noise of variance `10^(-snr_db/10)` to every symbol.
pub fn awgn(block: &SymbolBlock, cfg: &ChannelConfig) -> SymbolBlock {
    let sigma = cfg.noise_variance().sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let symbols = block
        .symbols
        .iter()
        .map(|&s| {
            let n: f64 = StandardNormal.sample(&mut rng);
            s + sigma * n
        })
        .collect();
    SymbolBlock {
        symbols,
        scale: block.scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        let b = normalize_power(&SymbolBlock::new(vec![2.0; 5])).unwrap();
        assert_eq!(b.symbols, vec![1.0; 5]);
        assert_eq!(b.scale, 2.0);

        let unit = SymbolBlock::new(vec![1.0, -1.0, 1.0]);
        let n = normalize_power(&unit).unwrap();
        assert_eq!(n.symbols, unit.symbols);
        assert_eq!(n.scale, 1.0);

        let b = normalize_power(&SymbolBlock::new(vec![3.0, 4.0])).unwrap();
        assert!((b.scale - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((b.power() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_errors() {
        assert!(normalize_power(&SymbolBlock::new(vec![])).is_err());
        assert!(normalize_power(&SymbolBlock::new(vec![0.0; 4])).is_err());
    }

    #[test]
    fn vanishing_noise() {
        let b = SymbolBlock::new(vec![1.0, -1.0, 0.5]);
        let out = awgn(&b, &ChannelConfig::new(200.0, 3).unwrap());
        for (a, b) in out.symbols.iter().zip(&b.symbols) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn deterministic_and_stream_separated() {
        let b = SymbolBlock::new(vec![1.0; 64]);
        let cfg = ChannelConfig::new(0.0, 42).unwrap();
        assert_eq!(awgn(&b, &cfg), awgn(&b, &cfg));
        assert_ne!(awgn(&b, &cfg), awgn(&b, &cfg.substream(1)));
    }

    #[test]
    fn unit_noise_variance_at_zero_db() {
        let b = SymbolBlock::new(vec![0.0; 1_000_000]);
        let out = awgn(&b, &ChannelConfig::new(0.0, 9).unwrap());
        let var = out.power();
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn non_finite_snr_rejected() {
        assert!(ChannelConfig::new(f64::NAN, 0).is_err());
        assert!(ChannelConfig::new(f64::NEG_INFINITY, 0).is_err());
    }

    #[test]
    fn infinite_snr_is_noiseless_and_serializes() {
        let cfg = ChannelConfig::new(f64::INFINITY, 3).unwrap();
        assert_eq!(cfg.noise_variance(), 0.0);
        let block = SymbolBlock::new(vec![0.5, -1.5, 2.0]);
        assert_eq!(awgn(&block, &cfg), block);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(json, r#"{"snr_db":"inf","seed":3}"#);
        assert_eq!(serde_json::from_str::<ChannelConfig>(&json).unwrap(), cfg);
        let finite: ChannelConfig = serde_json::from_str(r#"{"snr_db":-5.0,"seed":1}"#).unwrap();
        assert_eq!(finite.snr_db, -5.0);
    }
}
