//! Factorized Laplace entropy model over the common and individual feature
//! maps, fitted by moments.
//!
//! Common-map channels get a location (the channel mean, rounded to 1/256 so
//! it can be sent as 16-bit side information) and a scale. Individual maps are
//! residuals around the common map and are modeled as zero-mean, so only
//! their scale is fitted.

use serde::{Deserialize, Serialize};

use super::FeatureMaps;
use crate::error::{Error, Result};

pub const LOCATION_STEP: f64 = 1.0 / 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Laplace {
    pub loc: f64,
    pub scale: f64,
}

impl Laplace {
    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.loc) / self.scale;
        if z < 0.0 {
            0.5 * z.exp()
        } else {
            1.0 - 0.5 * (-z).exp()
        }
    }

    /// Probability mass of the bin of width `bin` centered on `x`.
    pub fn mass(&self, x: f64, bin: f64) -> f64 {
        let half = 0.5 * bin;
        (self.cdf(x + half) - self.cdf(x - half)).clamp(f64::MIN_POSITIVE, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyModel {
    pub bin: f64,
    pub common: Vec<Laplace>,
    pub individual: Vec<Laplace>,
}

pub fn quantize_location(v: f64) -> f64 {
    (v / LOCATION_STEP).round() * LOCATION_STEP
}

/// Fits one Laplace per active channel of each map kind. Scales below `floor`
/// (including degenerate, constant channels) are raised to `floor`.
pub fn fit_entropy_model(w: &FeatureMaps, bin: f64, floor: f64) -> Result<EntropyModel> {
    if !(bin > 0.0 && floor > 0.0) {
        return Err(Error::InvalidArgument(
            "entropy bin width and scale floor must be positive".into(),
        ));
    }
    let geo = &w.geometry;
    let p = geo.positions();
    if p == 0 || w.individual.is_empty() {
        return Err(Error::Empty("feature maps"));
    }
    let scale_of = |second_moment: f64| (second_moment / 2.0).sqrt().max(floor);
    let common = (0..geo.active_channels())
        .map(|c| {
            let vals = &w.common[c * p..(c + 1) * p];
            let loc = quantize_location(vals.iter().sum::<f64>() / p as f64);
            let var = vals.iter().map(|v| (v - loc) * (v - loc)).sum::<f64>() / p as f64;
            Laplace {
                loc,
                scale: scale_of(var),
            }
        })
        .collect();
    let individual = (0..geo.active_channels())
        .map(|c| {
            let n = (p * w.individual.len()) as f64;
            let sq: f64 = w
                .individual
                .iter()
                .flat_map(|m| &m[c * p..(c + 1) * p])
                .map(|v| v * v)
                .sum();
            Laplace {
                loc: 0.0,
                scale: scale_of(sq / n),
            }
        })
        .collect();
    Ok(EntropyModel {
        bin,
        common,
        individual,
    })
}

/// Per-element likelihoods in W_g element order (see [`super::ElementIndex`]).
pub fn likelihood(w: &FeatureMaps, model: &EntropyModel) -> Vec<f64> {
    let geo = &w.geometry;
    let p = geo.positions();
    let a = geo.active_channels();
    let mut out = Vec::with_capacity(a * p * (w.individual.len() + 1));
    for c in 0..a {
        for &v in &w.common[c * p..(c + 1) * p] {
            out.push(model.common[c].mass(v, model.bin));
        }
    }
    for m in &w.individual {
        for c in 0..a {
            for &v in &m[c * p..(c + 1) * p] {
                out.push(model.individual[c].mass(v, model.bin));
            }
        }
    }
    out
}

/// Total information content `Σ −log₂(em)` in bits.
pub fn information_bits(em: &[f64]) -> f64 {
    em.iter().map(|p| -p.log2()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_mass_is_unimodal() {
        let l = Laplace { loc: 1.0, scale: 0.5 };
        let at_mean = l.mass(1.0, 0.1);
        let far = l.mass(1.0 + 3.0 * 0.5, 0.1);
        assert!(at_mean > far);
        assert!(at_mean <= 1.0 && far > 0.0);
        assert!((l.cdf(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn location_quantization() {
        assert_eq!(quantize_location(0.5 + 0.3 / 256.0), 0.5);
    }
}
