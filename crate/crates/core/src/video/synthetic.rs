//! Deterministic synthetic clips used as fixtures and as the default service
//! inputs when no recorded video is configured.

use super::{Frame, VideoSequence};
use crate::error::Result;

/// A user clip together with its ground truth: the per-frame foreground
/// coverage and the static backdrop behind the subject.
#[derive(Debug, Clone)]
pub struct UserClip {
    pub video: VideoSequence,
    pub alpha: Vec<Vec<f64>>,
    pub plate: Frame,
}

fn backdrop(width: usize, height: usize) -> Result<Frame> {
    let (w, h) = (width as f64, height as f64);
    Frame::from_fn(width, height, |x, y| {
        let u = x as f64 / w;
        let v = y as f64 / h;
        let tex = 0.04 * (u * 19.0).sin() * (v * 13.0).cos();
        [0.25 + 0.3 * v + tex, 0.45 + 0.2 * u - tex, 0.35 + 0.15 * (u + v)]
    })
}

/// Soft-edged elliptical subject sweeping left to right over a static
/// textured backdrop. Each backdrop pixel is covered in well under half of the
/// frames so a temporal median recovers the plate.
pub fn user_clip(width: usize, height: usize, frames: usize, fps: f64) -> Result<UserClip> {
    let plate = backdrop(width, height)?;
    let (w, h) = (width as f64, height as f64);
    let radius_x = 0.13 * w;
    let radius_y = 0.30 * h;
    let mut out = Vec::with_capacity(frames);
    let mut alphas = Vec::with_capacity(frames);
    for t in 0..frames {
        let s = if frames > 1 {
            t as f64 / (frames - 1) as f64
        } else {
            0.5
        };
        let cx = (0.15 + 0.7 * s) * w;
        let cy = (0.55 + 0.05 * (s * 6.0).sin()) * h;
        let mut alpha = vec![0.0; width * height];
        let frame = Frame::from_fn(width, height, |x, y| {
            let dx = (x as f64 + 0.5 - cx) / radius_x;
            let dy = (y as f64 + 0.5 - cy) / radius_y;
            let r = (dx * dx + dy * dy).sqrt();
            // ~1 px soft edge
            let a = 1.0 / (1.0 + ((r - 1.0) * radius_x.min(radius_y) / 0.6).exp());
            alpha[y * width + x] = a;
            let shade = 0.08 * (1.0 - r.min(1.0));
            let fg = if dy < -0.45 {
                [0.85 + shade, 0.62 + shade, 0.50 + shade]
            } else {
                [0.70 + shade, 0.15 + shade, 0.20 + shade]
            };
            let bg = plate.pixel(x, y);
            [
                a * fg[0] + (1.0 - a) * bg[0],
                a * fg[1] + (1.0 - a) * bg[1],
                a * fg[2] + (1.0 - a) * bg[2],
            ]
        })?;
        out.push(frame);
        alphas.push(alpha);
    }
    Ok(UserClip {
        video: VideoSequence::new(out, fps)?,
        alpha: alphas,
        plate,
    })
}

/// Remote scene the subject is composited into: slowly panning stripes over a
/// vertical gradient.
pub fn background_clip(width: usize, height: usize, frames: usize, fps: f64) -> Result<VideoSequence> {
    let (w, h) = (width as f64, height as f64);
    let out = (0..frames)
        .map(|t| {
            Frame::from_fn(width, height, |x, y| {
                let u = (x as f64 + 0.6 * t as f64) / w;
                let v = y as f64 / h;
                let stripes = 0.1 * (u * std::f64::consts::TAU * 3.0).sin();
                [0.2 + 0.5 * v + stripes, 0.5 + 0.1 * stripes, 0.75 - 0.4 * v]
            })
        })
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::new(out, fps)
}
