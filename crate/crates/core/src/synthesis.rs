//! Video synthesis: background-difference matting, the three matting losses
//! used as evaluation metrics, transition-region masks and compositing.
//!
//! All norms are per-pixel means, so the losses do not depend on resolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{box_downsample, Frame, CHANNELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaMatte {
    width: usize,
    height: usize,
    alpha: Vec<f64>,
}

impl AlphaMatte {
    pub fn new(width: usize, height: usize, alpha: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "matte dimensions must be positive, got {width}x{height}"
            )));
        }
        if alpha.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} alpha values for a {width}x{height} matte",
                alpha.len()
            )));
        }
        if let Some(v) = alpha.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("alpha {v} outside [0, 1]")));
        }
        Ok(Self { width, height, alpha })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.alpha
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.alpha[y * self.width + x]
    }

    /// Box-filtered thumbnail, the `G(·)` of the semantic loss.
    pub fn downsample(&self, factor: usize) -> Result<AlphaMatte> {
        let (w, h, data) = box_downsample(&self.alpha, self.width, self.height, 1, factor)?;
        AlphaMatte::new(w, h, data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    /// `α ≥ 0.5`.
    pub fn binarize(&self) -> Vec<bool> {
        self.alpha.iter().map(|&a| a >= 0.5).collect()
    }

    /// Intersection over union of the binarized mattes; two empty mattes
    /// count as a perfect match.
    pub fn iou(&self, other: &AlphaMatte) -> Result<f64> {
        self.check_dims(other.dims())?;
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.binarize().into_iter().zip(other.binarize()) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok(if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        })
    }

    fn check_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch(format!(
                "matte is {}x{}, expected {}x{}",
                self.width, self.height, dims.0, dims.1
            )));
        }
        Ok(())
    }
}

/// Binary mask of the matte's transition band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMask {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl TransitionMask {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} mask values for {width}x{height}",
                mask.len()
            )));
        }
        Ok(Self { width, height, mask })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn values(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

/// Background-difference matting.
///
/// The per-pixel distance is the RMS difference over the three channels. Alpha
/// is 0 up to `threshold`, 1 from `threshold + softness` on, and follows a
/// smoothstep in between; `softness == 0` gives a hard cut.
pub fn estimate_matte(fg: &Frame, bg: &Frame, threshold: f64, softness: f64) -> Result<AlphaMatte> {
    fg.check_same_dims(bg)?;
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "matting threshold must be positive, got {threshold}"
        )));
    }
    if !(softness >= 0.0 && softness.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "matting softness must be non-negative, got {softness}"
        )));
    }
    let alpha = fg
        .data()
        .chunks_exact(CHANNELS)
        .zip(bg.data().chunks_exact(CHANNELS))
        .map(|(a, b)| {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            let d = (d2 / CHANNELS as f64).sqrt();
            if d <= threshold {
                0.0
            } else if softness == 0.0 || d >= threshold + softness {
                1.0
            } else {
                let s = (d - threshold) / softness;
                s * s * (3.0 - 2.0 * s)
            }
        })
        .collect();
    AlphaMatte::new(fg.width(), fg.height(), alpha)
}

// Square-window max (dilate) or min (erode) of a binary image. The window is
// clipped at the image border, so pixels outside never count.
fn morph(bits: &[bool], w: usize, h: usize, radius: usize, dilate: bool) -> Vec<bool> {
    let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
        let mut out = vec![false; src.len()];
        for y in 0..h {
            for x in 0..w {
                let (pos, len) = if horizontal { (x, w) } else { (y, h) };
                let lo = pos.saturating_sub(radius);
                let hi = (pos + radius).min(len - 1);
                let mut acc = !dilate;
                for q in lo..=hi {
                    let v = if horizontal {
                        src[y * w + q]
                    } else {
                        src[q * w + x]
                    };
                    if dilate {
                        acc |= v;
                    } else {
                        acc &= v;
                    }
                }
                out[y * w + x] = acc;
            }
        }
        out
    };
    pass(&pass(bits, true), false)
}

/// Transition band of the ground-truth matte: binarized at 0.5, dilated
/// XOR eroded with a `(2·radius+1)²` square.
pub fn transition_mask(alpha_g: &AlphaMatte, radius: usize) -> Result<TransitionMask> {
    if radius == 0 {
        return Err(Error::InvalidArgument("mask radius must be at least 1".into()));
    }
    let (w, h) = alpha_g.dims();
    let bin = alpha_g.binarize();
    let dil = morph(&bin, w, h, radius, true);
    let ero = morph(&bin, w, h, radius, false);
    TransitionMask::new(w, h, dil.iter().zip(&ero).map(|(a, b)| a ^ b).collect())
}

/// `½ · mean((s_p − G(α_g))²)` with `G` the box thumbnail at `factor`.
pub fn semantic_loss(s_p: &AlphaMatte, alpha_g: &AlphaMatte, factor: usize) -> Result<f64> {
    let thumb = alpha_g.downsample(factor)?;
    s_p.check_dims(thumb.dims())?;
    let n = s_p.alpha.len() as f64;
    Ok(0.5
        * s_p
            .alpha
            .iter()
            .zip(&thumb.alpha)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
        / n)
}

/// Mean of `|d_p − α_g|` over the pixels inside `m_d`; 0 for an empty mask.
pub fn detail_loss(d_p: &AlphaMatte, alpha_g: &AlphaMatte, m_d: &TransitionMask) -> Result<f64> {
    d_p.check_dims(alpha_g.dims())?;
    d_p.check_dims(m_d.dims())?;
    let (sum, count) = d_p
        .alpha
        .iter()
        .zip(&alpha_g.alpha)
        .zip(&m_d.mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), ((a, b), _)| (s + (a - b).abs(), c + 1));
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// The two parts of the fusion loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionTerms {
    /// `mean |α_p − α_g|`.
    pub matte: f64,
    /// Mean per-channel L1 between images composited with `α_p` and `α_g`.
    pub compositional: f64,
}

impl FusionTerms {
    pub fn total(&self) -> f64 {
        self.matte + self.compositional
    }
}

pub fn fusion_terms(
    alpha_p: &AlphaMatte,
    alpha_g: &AlphaMatte,
    fg: &Frame,
    bg: &Frame,
) -> Result<FusionTerms> {
    alpha_p.check_dims(alpha_g.dims())?;
    alpha_p.check_dims(fg.dims())?;
    fg.check_same_dims(bg)?;
    let n = alpha_p.alpha.len() as f64;
    let matte = alpha_p
        .alpha
        .iter()
        .zip(&alpha_g.alpha)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n;
    // α_p·F + (1−α_p)·B − (α_g·F + (1−α_g)·B) = (α_p − α_g)(F − B)
    let compositional = alpha_p
        .alpha
        .iter()
        .zip(&alpha_g.alpha)
        .zip(
            fg.data()
                .chunks_exact(CHANNELS)
                .zip(bg.data().chunks_exact(CHANNELS)),
        )
        .map(|((ap, ag), (f, b))| {
            let da = ap - ag;
            f.iter().zip(b).map(|(f, b)| (da * (f - b)).abs()).sum::<f64>()
        })
        .sum::<f64>()
        / (n * CHANNELS as f64);
    Ok(FusionTerms { matte, compositional })
}

/// Matte L1 plus compositional L1.
pub fn fusion_loss(alpha_p: &AlphaMatte, alpha_g: &AlphaMatte, fg: &Frame, bg: &Frame) -> Result<f64> {
    Ok(fusion_terms(alpha_p, alpha_g, fg, bg)?.total())
}

/// `α·x + (1−α)·b` per pixel.
pub fn composite(x_hat: &Frame, b_hat: &Frame, alpha: &AlphaMatte) -> Result<Frame> {
    x_hat.check_same_dims(b_hat)?;
    alpha.check_dims(x_hat.dims())?;
    let data = x_hat
        .data()
        .chunks_exact(CHANNELS)
        .zip(b_hat.data().chunks_exact(CHANNELS))
        .zip(&alpha.alpha)
        .flat_map(|((x, b), &a)| {
            let mut px = [0.0; CHANNELS];
            for c in 0..CHANNELS {
                px[c] = a * x[c] + (1.0 - a) * b[c];
            }
            px
        })
        .collect();
    Frame::from_clamped(x_hat.width(), x_hat.height(), data)
}

/// Per-pixel, per-channel temporal median: the clean plate behind a subject
/// that never covers a pixel in more than half the frames.
pub fn temporal_median(frames: &[Frame]) -> Result<Frame> {
    let first = frames.first().ok_or(Error::Empty("frames"))?;
    for f in frames {
        first.check_same_dims(f)?;
    }
    let mut column = Vec::with_capacity(frames.len());
    let data = (0..first.data().len())
        .map(|i| {
            column.clear();
            column.extend(frames.iter().map(|f| f.data()[i]));
            column.sort_by(f64::total_cmp);
            let m = column.len() / 2;
            if column.len() % 2 == 1 {
                column[m]
            } else {
                0.5 * (column[m - 1] + column[m])
            }
        })
        .collect();
    Frame::new(first.width(), first.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_matte(size: usize, lo: usize, hi: usize) -> AlphaMatte {
        let a = (0..size * size)
            .map(|i| {
                let (x, y) = (i % size, i / size);
                if (lo..hi).contains(&x) && (lo..hi).contains(&y) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        AlphaMatte::new(size, size, a).unwrap()
    }

    #[test]
    fn matte_extremes() {
        let bg = Frame::filled(8, 8, [0.2, 0.3, 0.4]).unwrap();
        let m = estimate_matte(&bg, &bg, 0.05, 0.1).unwrap();
        assert!(m.values().iter().all(|&a| a == 0.0));

        let black = Frame::filled(8, 8, [0.0; 3]).unwrap();
        let white = Frame::filled(8, 8, [1.0; 3]).unwrap();
        let m = estimate_matte(&white, &black, 0.05, 0.1).unwrap();
        assert!(m.values().iter().all(|&a| a == 1.0));

        let small = Frame::filled(4, 8, [0.0; 3]).unwrap();
        assert!(estimate_matte(&small, &black, 0.05, 0.1).is_err());
        assert!(estimate_matte(&black, &black, 0.0, 0.1).is_err());
    }

    #[test]
    fn disk_matte_matches_truth() {
        let (w, h) = (96, 80);
        let bg = Frame::from_fn(w, h, |x, y| {
            [
                0.2 + 0.3 * x as f64 / w as f64,
                0.5,
                0.3 + 0.2 * y as f64 / h as f64,
            ]
        })
        .unwrap();
        let inside = |x: usize, y: usize| {
            let dx = x as f64 + 0.5 - 48.0;
            let dy = y as f64 + 0.5 - 40.0;
            dx * dx + dy * dy <= 20.0 * 20.0
        };
        let fg = Frame::from_fn(w, h, |x, y| {
            if inside(x, y) {
                [0.9, 0.1, 0.15]
            } else {
                bg.pixel(x, y)
            }
        })
        .unwrap();
        let truth = AlphaMatte::new(
            w,
            h,
            (0..w * h).map(|i| inside(i % w, i / w) as u8 as f64).collect(),
        )
        .unwrap();
        let m = estimate_matte(&fg, &bg, 0.08, 0.1).unwrap();
        assert!(m.iou(&truth).unwrap() >= 0.95);
    }

    #[test]
    fn square_band_is_four_wide() {
        let m = square_matte(32, 10, 20);
        let mask = transition_mask(&m, 2).unwrap();
        // dilated 14×14 minus eroded 6×6
        assert_eq!(mask.count(), 14 * 14 - 6 * 6);
        assert!(mask.get(8, 15) && mask.get(11, 15) && !mask.get(12, 15) && !mask.get(7, 15));
    }

    #[test]
    fn constant_mattes_have_no_band() {
        for v in [0.0, 1.0] {
            let m = AlphaMatte::filled(12, 9, v).unwrap();
            assert!(transition_mask(&m, 3).unwrap().is_empty());
        }
        assert!(transition_mask(&AlphaMatte::filled(2, 2, 0.0).unwrap(), 0).is_err());
    }

    #[test]
    fn semantic_loss_examples() {
        let g = AlphaMatte::new(20, 20, (0..400).map(|i| (i % 7) as f64 / 10.0).collect()).unwrap();
        let thumb = g.downsample(2).unwrap();
        assert_eq!(semantic_loss(&thumb, &g, 2).unwrap(), 0.0);
        let shifted = AlphaMatte::new(10, 10, thumb.values().iter().map(|v| v + 0.1).collect()).unwrap();
        assert!((semantic_loss(&shifted, &g, 2).unwrap() - 0.005).abs() < 1e-12);
        assert!(semantic_loss(&thumb, &g, 4).is_err());
    }

    #[test]
    fn detail_loss_examples() {
        let g = square_matte(20, 5, 15);
        assert_eq!(
            detail_loss(&g, &g, &transition_mask(&g, 1).unwrap()).unwrap(),
            0.0
        );

        let mask_bits: Vec<bool> = (0..400).map(|i| i < 50).collect();
        let mask = TransitionMask::new(20, 20, mask_bits.clone()).unwrap();
        let d = AlphaMatte::new(
            20,
            20,
            g.values()
                .iter()
                .zip(&mask_bits)
                .map(|(&a, &m)| if m { 0.2 } else { a })
                .collect(),
        )
        .unwrap();
        // the first 50 pixels lie above the square, where α_g is 0
        assert!((detail_loss(&d, &g, &mask).unwrap() - 0.2).abs() < 1e-12);

        let outside = AlphaMatte::new(
            20,
            20,
            g.values()
                .iter()
                .zip(&mask_bits)
                .map(|(&a, &m)| if m { a } else { 1.0 - a })
                .collect(),
        )
        .unwrap();
        assert_eq!(detail_loss(&outside, &g, &mask).unwrap(), 0.0);
    }

    #[test]
    fn fusion_loss_examples() {
        let g = square_matte(16, 4, 12);
        let fg = Frame::filled(16, 16, [0.9, 0.2, 0.1]).unwrap();
        let bg = Frame::filled(16, 16, [0.1, 0.4, 0.6]).unwrap();
        assert_eq!(fusion_loss(&g, &g, &fg, &bg).unwrap(), 0.0);

        let inv = AlphaMatte::new(16, 16, g.values().iter().map(|a| 1.0 - a).collect()).unwrap();
        let t = fusion_terms(&inv, &g, &fg, &bg).unwrap();
        assert_eq!(t.matte, 1.0);
        assert!((t.compositional - (0.8 + 0.2 + 0.5) / 3.0).abs() < 1e-12);

        let t = fusion_terms(&inv, &g, &fg, &fg).unwrap();
        assert_eq!(t.compositional, 0.0);
    }

    #[test]
    fn composite_examples() {
        let x = Frame::filled(4, 4, [1.0; 3]).unwrap();
        let b = Frame::filled(4, 4, [0.0; 3]).unwrap();
        assert_eq!(
            composite(&x, &b, &AlphaMatte::filled(4, 4, 1.0).unwrap()).unwrap(),
            x
        );
        assert_eq!(
            composite(&x, &b, &AlphaMatte::filled(4, 4, 0.0).unwrap()).unwrap(),
            b
        );
        let half = composite(&x, &b, &AlphaMatte::filled(4, 4, 0.5).unwrap()).unwrap();
        assert!(half.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn median_plate() {
        let frames: Vec<Frame> = [0.1, 0.9, 0.2, 0.2, 0.3]
            .iter()
            .map(|&v| Frame::filled(3, 2, [v; 3]).unwrap())
            .collect();
        let m = temporal_median(&frames).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.2));
        assert!(temporal_median(&[]).is_err());
    }
}
