//! Semantic transmission chain: latent transform → JSCC features → common
//! feature extraction → entropy model → element selection → analog channel →
//! inversion.
//!
//! The learned codec of the reference design is replaced by fixed transforms
//! (orthonormal color rotation, block DCT, diagonal JSCC gains) so results are
//! reproducible without training. Kept feature elements travel as real-valued
//! symbols; the receiver applies the LMMSE gain `1 / (1 + σ²)` to the
//! de-meaned symbols, which is what lets quality degrade smoothly with SNR.

pub mod entropy;
pub mod latent;

use serde::{Deserialize, Serialize};

pub use entropy::{fit_entropy_model, likelihood, EntropyModel, Laplace};
pub use latent::{
    jscc_decode, jscc_encode, latent_inverse, latent_transform, FeatureStack, LatentGeometry, LatentRep,
};

use crate::channel::{awgn, ChannelConfig, SymbolBlock};
use crate::error::{Error, Result};
use crate::video::Gop;
use crate::TxStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemanticConfig {
    /// Pixel block edge of the latent transform.
    pub block_size: usize,
    /// Latent channel dimension.
    pub channels: usize,
    /// How many feature elements each GOP may spend.
    pub budget: SymbolBudget,
    /// Bits charged per analog symbol in delay accounting.
    pub bits_per_symbol: u32,
    /// Bin width of the entropy model's probability masses.
    pub entropy_bin: f64,
    /// Lower bound on fitted Laplace scales.
    pub scale_floor: f64,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            block_size: 6,
            channels: 128,
            budget: SymbolBudget::Fraction(1.0),
            bits_per_symbol: 32,
            entropy_bin: 0.05,
            scale_floor: 1e-3,
        }
    }
}

/// Per-GOP symbol budget.
///
/// `ClassicalRatio(r)` sizes the packet so its total air bits (symbols plus
/// side information) stay within `r` times what the classical chain spends on
/// the same GOP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolBudget {
    Fraction(f64),
    Symbols(usize),
    AirBits(u64),
    ClassicalRatio(f64),
}

impl SymbolBudget {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SymbolBudget::Fraction(f) => f > 0.0 && f <= 1.0,
            SymbolBudget::Symbols(n) => n > 0,
            SymbolBudget::AirBits(b) => b > 0,
            SymbolBudget::ClassicalRatio(r) => r > 0.0 && r.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid symbol budget {self:?}")))
        }
    }

    /// Symbol count for a GOP with `elements` candidates. `classical_air_bits`
    /// is required for `ClassicalRatio` only. Never less than one symbol.
    pub fn resolve(
        &self,
        elements: usize,
        geo: &LatentGeometry,
        bits_per_symbol: u32,
        classical_air_bits: Option<u64>,
    ) -> Result<usize> {
        self.validate()?;
        if elements == 0 {
            return Err(Error::Empty("feature elements"));
        }
        let air = match *self {
            SymbolBudget::Fraction(f) => {
                return Ok(((f * elements as f64).round() as usize).clamp(1, elements))
            }
            SymbolBudget::Symbols(n) => return Ok(n.min(elements)),
            SymbolBudget::AirBits(b) => b,
            SymbolBudget::ClassicalRatio(r) => {
                let classical = classical_air_bits.ok_or_else(|| {
                    Error::InvalidArgument("a classical-ratio budget needs the classical air bits".into())
                })?;
                (r * classical as f64).floor() as u64
            }
        };
        let cost = |k: usize| {
            k as u64 * bits_per_symbol as u64
                + subset_index_bits(elements, k)
                + 16 * geo.active_channels() as u64
                + 32
        };
        // Cost is increasing in k up to elements/2 and bounded by the symbol
        // term beyond; a linear scan from the bit-only estimate downwards is
        // cheap and exact.
        let mut k = ((air / bits_per_symbol.max(1) as u64) as usize).min(elements);
        while k > 1 && cost(k) > air {
            k -= 1;
        }
        Ok(k.max(1))
    }
}

/// Common map `W_gc` plus the per-frame residuals `W_gi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMaps {
    pub geometry: LatentGeometry,
    pub common: Vec<f64>,
    pub individual: Vec<Vec<f64>>,
}

impl FeatureMaps {
    pub fn gop_size(&self) -> usize {
        self.individual.len()
    }

    /// `Y_g,i = W_gc + W_gi` for every frame.
    pub fn reconstruct(&self) -> FeatureStack {
        FeatureStack {
            geometry: self.geometry.clone(),
            maps: self
                .individual
                .iter()
                .map(|ind| ind.iter().zip(&self.common).map(|(a, b)| b + a).collect())
                .collect(),
        }
    }

    /// Feature elements eligible for transmission (active channels only).
    pub fn element_count(&self) -> usize {
        (self.gop_size() + 1) * self.geometry.active_channels() * self.geometry.positions()
    }
}

/// Splits features into their per-element GOP mean (rounded onto the feature
/// grid) and the residuals. Both parts stay on the grid, so recombining them
/// reproduces `y` bit for bit.
pub fn extract_common(y: &FeatureStack) -> Result<FeatureMaps> {
    let n = y.maps.len();
    if n == 0 {
        return Err(Error::Empty("feature stack has no frames"));
    }
    let len = y.geometry.map_len();
    let mut common = vec![0.0; len];
    for m in &y.maps {
        for (c, v) in common.iter_mut().zip(m) {
            *c += v;
        }
    }
    for c in &mut common {
        *c = latent::to_grid(*c / n as f64);
    }
    let individual = y
        .maps
        .iter()
        .map(|m| m.iter().zip(&common).map(|(v, c)| v - c).collect())
        .collect();
    Ok(FeatureMaps {
        geometry: y.geometry.clone(),
        common,
        individual,
    })
}

/// Element addressing over W_g: common map first (`c * P + pos` for active
/// channels), then each individual map in frame order.
#[derive(Debug, Clone, Copy)]
pub struct ElementIndex {
    active: usize,
    positions: usize,
}

impl ElementIndex {
    pub fn new(geo: &LatentGeometry) -> Self {
        Self {
            active: geo.active_channels(),
            positions: geo.positions(),
        }
    }

    fn per_map(&self) -> usize {
        self.active * self.positions
    }

    /// `(map, channel, position)`, where map 0 is the common map and map
    /// `i + 1` is frame `i`'s residual.
    pub fn locate(&self, element: usize) -> (usize, usize, usize) {
        let map = element / self.per_map();
        let rest = element % self.per_map();
        (map, rest / self.positions, rest % self.positions)
    }

    pub fn is_common(&self, element: usize) -> bool {
        element < self.per_map()
    }
}

fn element_value(w: &FeatureMaps, map: usize, c: usize, pos: usize) -> f64 {
    let p = w.geometry.positions();
    if map == 0 {
        w.common[c * p + pos]
    } else {
        w.individual[map - 1][c * p + pos]
    }
}

fn element_location(model: &EntropyModel, map: usize, c: usize) -> f64 {
    if map == 0 {
        model.common[c].loc
    } else {
        model.individual[c].loc
    }
}

/// What crosses the link for one GOP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticPacket {
    pub geometry: LatentGeometry,
    pub gop_size: usize,
    /// Kept element indices, ascending; one symbol per entry.
    pub kept: Vec<usize>,
    /// De-meaned kept values, power normalized (`scale` undoes it).
    pub symbols: SymbolBlock,
    /// Common-map channel locations, shared as side information.
    pub locations: Vec<f64>,
    pub mask_bits: u64,
}

impl SemanticPacket {
    /// Side information: kept-element mask (enumerative code length), 16-bit
    /// channel locations and the 32-bit power scale.
    pub fn side_info_bits(&self) -> u64 {
        self.mask_bits + 16 * self.locations.len() as u64 + 32
    }
}

/// `⌈log₂ C(n, k)⌉`: bits to index one k-subset of n elements.
pub fn subset_index_bits(n: usize, k: usize) -> u64 {
    let k = k.min(n);
    let k = k.min(n - k);
    let mut bits = 0.0;
    for i in 1..=k {
        bits += ((n - k + i) as f64 / i as f64).log2();
    }
    bits.ceil() as u64
}

/// Keeps the `budget` most informative elements (`−log em`), common-map
/// elements before any residual element, and packs their de-meaned values.
pub fn variable_length_code(
    w: &FeatureMaps,
    model: &EntropyModel,
    em: &[f64],
    budget: usize,
) -> Result<SemanticPacket> {
    if budget == 0 {
        return Err(Error::InvalidArgument("symbol budget must be at least 1".into()));
    }
    let total = w.element_count();
    if em.len() != total {
        return Err(Error::DimensionMismatch(format!(
            "{} likelihoods for {} elements",
            em.len(),
            total
        )));
    }
    let idx = ElementIndex::new(&w.geometry);
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| {
        idx.is_common(b)
            .cmp(&idx.is_common(a))
            .then(em[a].total_cmp(&em[b]))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = order.into_iter().take(budget.min(total)).collect();
    kept.sort_unstable();
    let values: Vec<f64> = kept
        .iter()
        .map(|&e| {
            let (map, c, pos) = idx.locate(e);
            element_value(w, map, c, pos) - element_location(model, map, c)
        })
        .collect();
    let raw = SymbolBlock::new(values);
    let symbols = if raw.power() > 0.0 {
        crate::channel::normalize_power(&raw)?
    } else {
        SymbolBlock {
            symbols: raw.symbols,
            scale: 0.0,
        }
    };
    Ok(SemanticPacket {
        geometry: w.geometry.clone(),
        gop_size: w.gop_size(),
        mask_bits: subset_index_bits(total, kept.len()),
        kept,
        symbols,
        locations: model.common.iter().map(|l| l.loc).collect(),
    })
}

/// Receiver side: LMMSE-scales received symbols, restores locations and fills
/// dropped elements with their channel location.
pub fn unpack(packet: &SemanticPacket, received: &SymbolBlock, noise_variance: f64) -> FeatureMaps {
    let geo = &packet.geometry;
    let p = geo.positions();
    let a = geo.active_channels();
    let len = geo.map_len();
    let mut common = vec![0.0; len];
    for c in 0..a {
        common[c * p..(c + 1) * p].fill(packet.locations[c]);
    }
    let mut individual = vec![vec![0.0; len]; packet.gop_size];
    let gain = packet.symbols.scale / (1.0 + noise_variance);
    let idx = ElementIndex::new(geo);
    for (&e, &y) in packet.kept.iter().zip(&received.symbols) {
        let (map, c, pos) = idx.locate(e);
        if map == 0 {
            common[c * p + pos] = packet.locations[c] + gain * y;
        } else {
            individual[map - 1][c * p + pos] = gain * y;
        }
    }
    FeatureMaps {
        geometry: geo.clone(),
        common,
        individual,
    }
}

/// Full transmitter → channel → receiver chain for one GOP.
pub fn semantic_transmit(
    gop: &Gop,
    ch: &ChannelConfig,
    cfg: &SemanticConfig,
    symbol_budget: usize,
) -> Result<(Gop, TxStats)> {
    let lat = latent_transform(gop, cfg.block_size, cfg.channels)?;
    let features = jscc_encode(&lat);
    let w = extract_common(&features)?;
    let model = fit_entropy_model(&w, cfg.entropy_bin, cfg.scale_floor)?;
    let em = likelihood(&w, &model);
    let packet = variable_length_code(&w, &model, &em, symbol_budget)?;
    let received = awgn(&packet.symbols, ch);
    let w_hat = unpack(&packet, &received, ch.noise_variance());
    let y_hat = w_hat.reconstruct();
    let out = latent_inverse(&jscc_decode(&y_hat))?;
    let side = packet.side_info_bits();
    let symbols = packet.kept.len() as u64;
    let payload = symbols * cfg.bits_per_symbol as u64 + side;
    Ok((
        out,
        TxStats {
            payload_bits: payload,
            channel_symbols: symbols,
            air_bits: payload,
            side_info_bits: side,
            wireless_delay_seconds: 0.0,
            decode_failures: 0,
            concealed_blocks: 0,
        },
    ))
}

/// Resolves `cfg.budget` for one GOP.
pub fn symbol_budget_for(gop: &Gop, cfg: &SemanticConfig, classical_air_bits: Option<u64>) -> Result<usize> {
    let (w, h) = gop.dims();
    let geo = LatentGeometry::new(w, h, cfg.block_size, cfg.channels)?;
    let elements = (gop.len() + 1) * geo.active_channels() * geo.positions();
    cfg.budget
        .resolve(elements, &geo, cfg.bits_per_symbol, classical_air_bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::Frame;

    fn geometry() -> LatentGeometry {
        LatentGeometry::new(12, 6, 2, 12).unwrap()
    }

    fn stack(maps: Vec<Vec<f64>>) -> FeatureStack {
        FeatureStack {
            geometry: geometry(),
            maps,
        }
    }

    #[test]
    fn single_frame_has_zero_residual() {
        let len = geometry().map_len();
        let y = stack(vec![(0..len).map(|i| latent::to_grid(i as f64 * 0.37)).collect()]);
        let w = extract_common(&y).unwrap();
        assert!(w.individual[0].iter().all(|&v| v == 0.0));
        assert_eq!(w.reconstruct(), y);
    }

    #[test]
    fn two_frames_split_symmetrically() {
        let len = geometry().map_len();
        let a: Vec<f64> = (0..len).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..len).map(|i| 1.0 - i as f64 * 0.25).collect();
        let w = extract_common(&stack(vec![a.clone(), b.clone()])).unwrap();
        for i in 0..len {
            assert_eq!(w.common[i], (a[i] + b[i]) / 2.0);
            assert_eq!(w.individual[0][i], (a[i] - b[i]) / 2.0);
            assert_eq!(w.individual[1][i], -(a[i] - b[i]) / 2.0);
        }
    }

    #[test]
    fn static_gop_has_no_residual() {
        let len = geometry().map_len();
        let a: Vec<f64> = (0..len).map(|i| latent::to_grid((i as f64).sin())).collect();
        let w = extract_common(&stack(vec![a.clone(); 4])).unwrap();
        assert!(w.individual.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn budget_resolution() {
        let geo = LatentGeometry::new(66, 66, 6, 128).unwrap();
        let e = 9 * geo.active_channels() * geo.positions();
        assert_eq!(SymbolBudget::Fraction(1.0).resolve(e, &geo, 32, None).unwrap(), e);
        assert_eq!(SymbolBudget::Symbols(10).resolve(e, &geo, 32, None).unwrap(), 10);
        let k = SymbolBudget::AirBits(20_000).resolve(e, &geo, 32, None).unwrap();
        let cost = |k: usize| k as u64 * 32 + subset_index_bits(e, k) + 16 * 108 + 32;
        assert!(cost(k) <= 20_000 && cost(k + 1) > 20_000);
        assert!(SymbolBudget::ClassicalRatio(0.1)
            .resolve(e, &geo, 32, None)
            .is_err());
        assert_eq!(
            SymbolBudget::ClassicalRatio(0.1)
                .resolve(e, &geo, 32, Some(200_000))
                .unwrap(),
            k
        );
        assert!(SymbolBudget::Fraction(0.0).validate().is_err());
    }

    #[test]
    fn subset_bits() {
        assert_eq!(subset_index_bits(10, 0), 0);
        assert_eq!(subset_index_bits(10, 10), 0);
        assert_eq!(subset_index_bits(4, 2), 3); // log2(6)
        assert_eq!(subset_index_bits(10, 1), 4);
    }

    #[test]
    fn full_budget_is_lossless_packetization() {
        let gop = Gop::new(
            (0..2)
                .map(|t| Frame::from_fn(12, 6, |x, y| [(x + t) as f64 / 14.0, y as f64 / 6.0, 0.3]).unwrap())
                .collect(),
        )
        .unwrap();
        let cfg = SemanticConfig {
            block_size: 2,
            channels: 12,
            ..SemanticConfig::default()
        };
        let lat = latent_transform(&gop, 2, 12).unwrap();
        let w = extract_common(&jscc_encode(&lat)).unwrap();
        let model = fit_entropy_model(&w, cfg.entropy_bin, cfg.scale_floor).unwrap();
        let em = likelihood(&w, &model);
        let packet = variable_length_code(&w, &model, &em, usize::MAX).unwrap();
        assert_eq!(packet.kept.len(), w.element_count());
        let back = unpack(&packet, &packet.symbols, 0.0);
        for (a, b) in back.common.iter().zip(&w.common) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in back
            .individual
            .iter()
            .flatten()
            .zip(w.individual.iter().flatten())
        {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(variable_length_code(&w, &model, &em, 0).is_err());
    }

    #[test]
    fn dropped_elements_take_location() {
        let gop = Gop::new(vec![
            Frame::from_fn(12, 6, |x, y| [
                x as f64 / 12.0,
                y as f64 / 6.0,
                0.5
            ])
            .unwrap();
            2
        ])
        .unwrap();
        let lat = latent_transform(&gop, 2, 12).unwrap();
        let w = extract_common(&jscc_encode(&lat)).unwrap();
        let model = fit_entropy_model(&w, 0.05, 1e-3).unwrap();
        let em = likelihood(&w, &model);
        let packet = variable_length_code(&w, &model, &em, 5).unwrap();
        assert_eq!(packet.kept.len(), 5);
        let idx = ElementIndex::new(&w.geometry);
        assert!(packet.kept.iter().all(|&e| idx.is_common(e)));
        let back = unpack(&packet, &packet.symbols, 0.0);
        let p = w.geometry.positions();
        for e in 0..w.geometry.active_channels() * p {
            if !packet.kept.contains(&e) {
                assert_eq!(back.common[e], model.common[e / p].loc);
            }
        }
        assert!(back.individual.iter().flatten().all(|&v| v == 0.0));
    }
}
