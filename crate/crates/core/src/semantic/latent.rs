//! Latent transform (orthonormal color rotation + block DCT) and the JSCC
//! feature mapping on top of it.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::{zigzag, Dct};
use crate::video::{Frame, Gop, CHANNELS};

/// Fixed-point grid of JSCC features (2⁻³⁰). Features are integers on this
/// grid, so sums and differences of feature maps are exact in `f64`.
pub const FEATURE_GRID: f64 = 1.0 / (1u64 << 30) as f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentGeometry {
    pub width: usize,
    pub height: usize,
    pub block: usize,
    pub channels: usize,
    pub grid_w: usize,
    pub grid_h: usize,
}

impl LatentGeometry {
    pub fn new(width: usize, height: usize, block: usize, channels: usize) -> Result<Self> {
        if block == 0 {
            return Err(Error::InvalidArgument("block size must be positive".into()));
        }
        if CHANNELS * block * block > channels {
            return Err(Error::InvalidArgument(format!(
                "{block}x{block} RGB blocks need {} latent channels, only {channels} configured",
                CHANNELS * block * block
            )));
        }
        Ok(Self {
            width,
            height,
            block,
            channels,
            grid_w: width.div_ceil(block),
            grid_h: height.div_ceil(block),
        })
    }

    /// Channels that carry transform coefficients; the rest are zero.
    pub fn active_channels(&self) -> usize {
        CHANNELS * self.block * self.block
    }

    pub fn positions(&self) -> usize {
        self.grid_w * self.grid_h
    }

    pub fn map_len(&self) -> usize {
        self.channels * self.positions()
    }

    pub fn padded_dims(&self) -> (usize, usize) {
        (self.grid_w * self.block, self.grid_h * self.block)
    }

    /// Zigzag frequency index of a channel (channels interleave the three
    /// color components per frequency).
    pub fn frequency(&self, channel: usize) -> usize {
        channel / CHANNELS
    }
}

/// Per-frame latent tensors laid out channel-major: `[c][y][x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRep {
    pub geometry: LatentGeometry,
    pub frames: Vec<Vec<f64>>,
}

// Orthonormal color rotation: luma plus two opponent axes.
const COLOR: [[f64; 3]; 3] = [
    [
        0.577_350_269_189_625_8,
        0.577_350_269_189_625_8,
        0.577_350_269_189_625_8,
    ],
    [FRAC_1_SQRT_2, 0.0, -FRAC_1_SQRT_2],
    [
        0.408_248_290_463_863,
        -0.816_496_580_927_726,
        0.408_248_290_463_863,
    ],
];

pub fn latent_transform(gop: &Gop, block: usize, channels: usize) -> Result<LatentRep> {
    if gop.is_empty() {
        return Err(Error::Empty("GOP has no frames"));
    }
    let (w, h) = gop.dims();
    let geo = LatentGeometry::new(w, h, block, channels)?;
    let dct = Dct::new(block);
    let zz = zigzag(block);
    let bb = block * block;
    let mut frames = Vec::with_capacity(gop.len());
    let mut planes = vec![vec![0.0; bb]; CHANNELS];
    let mut coef = vec![0.0; bb];
    for frame in gop.frames() {
        let mut lat = vec![0.0; geo.map_len()];
        for gy in 0..geo.grid_h {
            for gx in 0..geo.grid_w {
                for dy in 0..block {
                    for dx in 0..block {
                        let x = (gx * block + dx).min(w - 1);
                        let y = (gy * block + dy).min(h - 1);
                        let px = frame.pixel(x, y);
                        for (k, row) in COLOR.iter().enumerate() {
                            planes[k][dy * block + dx] = row[0] * px[0] + row[1] * px[1] + row[2] * px[2];
                        }
                    }
                }
                let pos = gy * geo.grid_w + gx;
                for (k, plane) in planes.iter().enumerate() {
                    dct.forward(plane, &mut coef);
                    for (f, &idx) in zz.iter().enumerate() {
                        let c = f * CHANNELS + k;
                        lat[c * geo.positions() + pos] = coef[idx];
                    }
                }
            }
        }
        frames.push(lat);
    }
    Ok(LatentRep {
        geometry: geo,
        frames,
    })
}

pub fn latent_inverse(lat: &LatentRep) -> Result<Gop> {
    let geo = &lat.geometry;
    let block = geo.block;
    let dct = Dct::new(block);
    let zz = zigzag(block);
    let bb = block * block;
    let mut coef = vec![0.0; bb];
    let mut planes = vec![vec![0.0; bb]; CHANNELS];
    let mut out = Vec::with_capacity(lat.frames.len());
    for map in &lat.frames {
        if map.len() != geo.map_len() {
            return Err(Error::DimensionMismatch(format!(
                "latent map has {} values, geometry needs {}",
                map.len(),
                geo.map_len()
            )));
        }
        let mut data = vec![0.0; geo.width * geo.height * CHANNELS];
        for gy in 0..geo.grid_h {
            for gx in 0..geo.grid_w {
                let pos = gy * geo.grid_w + gx;
                for (k, plane) in planes.iter_mut().enumerate() {
                    for (f, &idx) in zz.iter().enumerate() {
                        coef[idx] = map[(f * CHANNELS + k) * geo.positions() + pos];
                    }
                    dct.inverse(&coef, plane);
                }
                for dy in 0..block {
                    for dx in 0..block {
                        let (x, y) = (gx * block + dx, gy * block + dy);
                        if x >= geo.width || y >= geo.height {
                            continue;
                        }
                        let i = dy * block + dx;
                        for c in 0..CHANNELS {
                            // transpose of the orthonormal rotation
                            let v = COLOR[0][c] * planes[0][i]
                                + COLOR[1][c] * planes[1][i]
                                + COLOR[2][c] * planes[2][i];
                            data[(y * geo.width + x) * CHANNELS + c] = v;
                        }
                    }
                }
            }
        }
        out.push(Frame::from_clamped(geo.width, geo.height, data)?);
    }
    Gop::new(out)
}

/// JSCC feature maps `Y_g`: one map per frame, same layout as the latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStack {
    pub geometry: LatentGeometry,
    pub maps: Vec<Vec<f64>>,
}

/// Fixed per-channel gain: `(1 + f)^(1/4)` for zigzag frequency `f`. Raising
/// high-frequency components relative to DC spreads channel noise more evenly
/// over the reconstructed spectrum.
pub fn jscc_gain(geo: &LatentGeometry, channel: usize) -> f64 {
    if channel >= geo.active_channels() {
        return 1.0;
    }
    ((1 + geo.frequency(channel)) as f64).powf(0.25)
}

#[inline]
pub fn to_grid(v: f64) -> f64 {
    (v / FEATURE_GRID).round() * FEATURE_GRID
}

/// Diagonal gain followed by rounding onto [`FEATURE_GRID`].
pub fn jscc_encode(lat: &LatentRep) -> FeatureStack {
    let geo = &lat.geometry;
    let p = geo.positions();
    let maps = lat
        .frames
        .iter()
        .map(|m| {
            m.iter()
                .enumerate()
                .map(|(i, &v)| to_grid(v * jscc_gain(geo, i / p)))
                .collect()
        })
        .collect();
    FeatureStack {
        geometry: geo.clone(),
        maps,
    }
}

pub fn jscc_decode(y: &FeatureStack) -> LatentRep {
    let geo = &y.geometry;
    let p = geo.positions();
    let frames = y
        .maps
        .iter()
        .map(|m| {
            m.iter()
                .enumerate()
                .map(|(i, &v)| v / jscc_gain(geo, i / p))
                .collect()
        })
        .collect();
    LatentRep {
        geometry: geo.clone(),
        frames,
    }
}
