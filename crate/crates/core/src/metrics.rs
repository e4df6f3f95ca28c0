//! Quality metrics: MSE, PSNR, MS-SSIM for frames; EPE, PCK and average
//! Jaccard for 3D tracks and 2D boxes.
//!
//! Frames are normalized to `[0, 1]`, so the PSNR peak is 1. LPIPS needs a
//! pretrained perceptual network and is not provided.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{box_downsample, Frame, CHANNELS};

/// PSNR reported for identical frames (and the ceiling for any pair).
pub const PSNR_CAP_DB: f64 = 100.0;

/// Standard five-scale MS-SSIM exponents, finest scale first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

pub fn mse(x: &Frame, y: &Frame) -> Result<f64> {
    x.check_same_dims(y)?;
    let sum: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.data().len() as f64)
}

/// `10·log10(1 / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(x: &Frame, y: &Frame) -> Result<f64> {
    Ok(psnr_from_mse(mse(x, y)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// Mean per-frame PSNR of two equally long frame lists.
pub fn sequence_psnr(x: &[Frame], y: &[Frame]) -> Result<f64> {
    mean_over_frames(x, y, psnr)
}

pub fn sequence_ms_ssim(x: &[Frame], y: &[Frame], params: &MsSsimParams) -> Result<f64> {
    mean_over_frames(x, y, |a, b| ms_ssim_with(a, b, params))
}

fn mean_over_frames(x: &[Frame], y: &[Frame], f: impl Fn(&Frame, &Frame) -> Result<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} frames vs {} frames",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Empty("no frames to compare"));
    }
    let mut total = 0.0;
    for (a, b) in x.iter().zip(y) {
        total += f(a, b)?;
    }
    Ok(total / x.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsSsimParams {
    pub scales: usize,
    pub window: usize,
    pub sigma: f64,
}

impl Default for MsSsimParams {
    fn default() -> Self {
        Self {
            scales: 5,
            window: 11,
            sigma: 1.5,
        }
    }
}

impl MsSsimParams {
    /// Smallest frame side these parameters accept.
    pub fn min_side(&self) -> usize {
        self.window << (self.scales - 1)
    }

    /// The default window with as many scales (at most five) as the frame
    /// size allows. Weights of a truncated pyramid are renormalized.
    pub fn for_dims(width: usize, height: usize) -> Self {
        let mut p = Self::default();
        while p.scales > 1 && p.min_side() > width.min(height) {
            p.scales -= 1;
        }
        p
    }

    fn weights(&self) -> Vec<f64> {
        let w = &MS_SSIM_WEIGHTS[..self.scales];
        let total: f64 = w.iter().sum();
        w.iter().map(|v| v / total).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.scales > MS_SSIM_WEIGHTS.len() {
            return Err(Error::InvalidArgument(format!(
                "MS-SSIM supports 1..=5 scales, got {}",
                self.scales
            )));
        }
        if self.window.is_multiple_of(2) || self.sigma <= 0.0 {
            return Err(Error::InvalidArgument(
                "MS-SSIM window must be odd with positive sigma".into(),
            ));
        }
        Ok(())
    }
}

/// Five-scale MS-SSIM with an 11-tap Gaussian window (σ = 1.5).
pub fn ms_ssim(x: &Frame, y: &Frame) -> Result<f64> {
    ms_ssim_with(x, y, &MsSsimParams::default())
}

/// MS-SSIM averaged over the three color channels. Negative contrast-structure
/// terms are clamped to zero so the result stays in `[0, 1]`.
pub fn ms_ssim_with(x: &Frame, y: &Frame, params: &MsSsimParams) -> Result<f64> {
    params.validate()?;
    x.check_same_dims(y)?;
    let (w, h) = x.dims();
    let min = params.min_side();
    if w < min || h < min {
        return Err(Error::FrameTooSmall {
            min,
            width: w,
            height: h,
        });
    }
    let kernel = gaussian_kernel(params.window, params.sigma);
    let weights = params.weights();
    let mut total = 0.0;
    for c in 0..CHANNELS {
        let mut a = x.plane(c);
        let mut b = y.plane(c);
        let (mut cw, mut ch) = (w, h);
        let mut value = 1.0;
        for (scale, &weight) in weights.iter().enumerate() {
            let (lum, cs) = ssim_terms(&a, &b, cw, ch, &kernel);
            let last = scale + 1 == weights.len();
            let term = if last { lum * cs } else { cs };
            value *= term.max(0.0).powf(weight);
            if !last {
                let (nw, nh, da) = box_downsample(&a, cw, ch, 1, 2)?;
                let (_, _, db) = box_downsample(&b, cw, ch, 1, 2)?;
                a = da;
                b = db;
                cw = nw;
                ch = nh;
            }
        }
        total += value;
    }
    Ok((total / CHANNELS as f64).clamp(0.0, 1.0))
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable "valid" filtering of one plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let ow = w + 1 - n;
    let oh = h + 1 - n;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[(y + i) * ow + x])
                .sum();
        }
    }
    (out, ow, oh)
}

/// Mean luminance and mean contrast-structure terms of single-scale SSIM.
fn ssim_terms(a: &[f64], b: &[f64], w: usize, h: usize, k: &[f64]) -> (f64, f64) {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(p, q)| p * q).collect();
    let (mu_a, _, _) = filter_valid(a, w, h, k);
    let (mu_b, _, _) = filter_valid(b, w, h, k);
    let (e_aa, _, _) = filter_valid(&aa, w, h, k);
    let (e_bb, _, _) = filter_valid(&bb, w, h, k);
    let (e_ab, _, _) = filter_valid(&ab, w, h, k);
    let n = mu_a.len() as f64;
    let mut lum = 0.0;
    let mut cs = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        lum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs += (2.0 * cov + c2) / (var_a + var_b + c2);
    }
    (lum / n, cs / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet3D {
    pub points: Vec<[f64; 3]>,
}

impl PointSet3D {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite point coordinate".into()));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BBox {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        if min[0] > max[0] || min[1] > max[1] || min.iter().chain(&max).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "box min {min:?} must not exceed max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.max[0].min(other.max[0]) - self.min[0].max(other.min[0]);
        let h = self.max[1].min(other.max[1]) - self.min[1].max(other.min[1]);
        w.max(0.0) * h.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub boxes: Vec<BBox>,
}

fn point_distances(pred: &PointSet3D, gt: &PointSet3D) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted points vs {} ground-truth points",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("point sets are empty"));
    }
    Ok(pred
        .points
        .iter()
        .zip(&gt.points)
        .map(|(p, g)| {
            let d: f64 = p.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
            d.sqrt()
        })
        .collect())
}

/// Mean Euclidean end-point error.
pub fn epe(pred: &PointSet3D, gt: &PointSet3D) -> Result<f64> {
    let d = point_distances(pred, gt)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Fraction of points strictly closer than `tau` to their ground truth.
pub fn pck(pred: &PointSet3D, gt: &PointSet3D, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "PCK tolerance must be positive, got {tau}"
        )));
    }
    let d = point_distances(pred, gt)?;
    Ok(d.iter().filter(|&&v| v < tau).count() as f64 / d.len() as f64)
}

/// Mean intersection-over-union of paired boxes. A pair whose union has zero
/// area contributes 0.
pub fn average_jaccard(pred: &BoxSet, gt: &BoxSet) -> Result<f64> {
    if pred.boxes.len() != gt.boxes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted boxes vs {} ground-truth boxes",
            pred.boxes.len(),
            gt.boxes.len()
        )));
    }
    if pred.boxes.is_empty() {
        return Err(Error::Empty("box sets are empty"));
    }
    let mut total = 0.0;
    for (i, (p, g)) in pred.boxes.iter().zip(&gt.boxes).enumerate() {
        let inter = p.intersection_area(g);
        let union = p.area() + g.area() - inter;
        if union <= 0.0 {
            tracing::warn!(pair = i, "zero-area union in average Jaccard, counted as 0");
            continue;
        }
        total += inter / union;
    }
    Ok(total / pred.boxes.len() as f64)
}
