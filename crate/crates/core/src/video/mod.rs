//! Raster video data model: frames, groups of pictures and sequences.
//!
//! Samples are `f64` in `[0, 1]`, interleaved RGB, row-major. On disk they are
//! quantized to 8 bits (see [`raw`]).

pub mod raw;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    /// Wraps interleaved RGB samples. Fails if the length is wrong or any
    /// sample is outside `[0, 1]`.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * CHANNELS {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} frame needs {} samples, got {}",
                width,
                height,
                width * height * CHANNELS,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Like [`Frame::new`] but clamps samples into `[0, 1]` (NaN maps to 0).
    pub fn from_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, data)
    }

    /// Builds a frame from a per-pixel closure returning RGB; output is clamped.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::from_clamped(width, height, data)
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// One color plane as a contiguous row-major buffer.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(CHANNELS).copied().collect()
    }

    pub fn channel_means(&self) -> [f64; 3] {
        let mut sums = [0.0; 3];
        for px in self.data.chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                sums[c] += px[c];
            }
        }
        let n = (self.width * self.height) as f64;
        sums.map(|s| s / n)
    }

    pub(crate) fn check_same_dims(&self, other: &Frame) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// A run of consecutive, equally sized frames coded as one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gop {
    frames: Vec<Frame>,
}

impl Gop {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        check_homogeneous(&frames)?;
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSequence {
    frames: Vec<Frame>,
    fps: f64,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>, fps: f64) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        check_homogeneous(&frames)?;
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Dimensions of the frames, `None` for an empty sequence.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(Frame::dims)
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    /// Rebuilds a sequence from GOPs, keeping this sequence's frame rate.
    pub fn from_gops(gops: Vec<Gop>, fps: f64) -> Result<Self> {
        let frames = gops.into_iter().flat_map(Gop::into_frames).collect();
        Self::new(frames, fps)
    }
}

fn check_homogeneous(frames: &[Frame]) -> Result<()> {
    let Some(first) = frames.first() else {
        return Ok(());
    };
    for f in &frames[1..] {
        first.check_same_dims(f)?;
    }
    Ok(())
}

/// Splits a sequence into GOPs of `n` frames; the last GOP may be shorter.
pub fn segment_gops(video: &VideoSequence, n: usize) -> Result<Vec<Gop>> {
    if n == 0 {
        return Err(Error::InvalidArgument("GOP size must be at least 1".into()));
    }
    if video.is_empty() {
        return Err(Error::Empty("video has no frames"));
    }
    Ok(video
        .frames
        .chunks(n)
        .map(|c| Gop { frames: c.to_vec() })
        .collect())
}

/// Box-filter downsampling with edge-replicated padding up to a multiple of
/// `factor`. Output dimensions are `ceil(input / factor)`.
pub fn downsample(frame: &Frame, factor: usize) -> Result<Frame> {
    let (w, h, data) = box_downsample(&frame.data, frame.width, frame.height, CHANNELS, factor)?;
    Frame::from_clamped(w, h, data)
}

/// Shared box filter over interleaved planes with `channels` samples per pixel.
pub(crate) fn box_downsample(
    data: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    factor: usize,
) -> Result<(usize, usize, Vec<f64>)> {
    if factor == 0 {
        return Err(Error::InvalidArgument(
            "downsample factor must be at least 1".into(),
        ));
    }
    if factor == 1 {
        return Ok((width, height, data.to_vec()));
    }
    let ow = width.div_ceil(factor);
    let oh = height.div_ceil(factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = vec![0.0; ow * oh * channels];
    for oy in 0..oh {
        for ox in 0..ow {
            let o = (oy * ow + ox) * channels;
            for dy in 0..factor {
                let y = (oy * factor + dy).min(height - 1);
                for dx in 0..factor {
                    let x = (ox * factor + dx).min(width - 1);
                    let i = (y * width + x) * channels;
                    for c in 0..channels {
                        out[o + c] += data[i + c];
                    }
                }
            }
            for v in &mut out[o..o + channels] {
                *v *= norm;
            }
        }
    }
    Ok((ow, oh, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(n: usize) -> VideoSequence {
        let frames = (0..n)
            .map(|i| Frame::filled(2, 2, [i as f64 / n as f64; 3]).unwrap())
            .collect();
        VideoSequence::new(frames, 30.0).unwrap()
    }

    #[test]
    fn gops_exact_division() {
        let gops = segment_gops(&numbered(8), 4).unwrap();
        assert_eq!(gops.iter().map(Gop::len).collect::<Vec<_>>(), vec![4, 4]);
    }

    #[test]
    fn gops_with_remainder() {
        let gops = segment_gops(&numbered(7), 4).unwrap();
        assert_eq!(gops.iter().map(Gop::len).collect::<Vec<_>>(), vec![4, 3]);
    }

    #[test]
    fn gops_of_one() {
        let gops = segment_gops(&numbered(5), 1).unwrap();
        assert_eq!(gops.len(), 5);
        assert!(gops.iter().all(|g| g.len() == 1));
    }

    #[test]
    fn gop_errors() {
        let empty = VideoSequence::new(vec![], 30.0).unwrap();
        assert!(matches!(segment_gops(&empty, 4), Err(Error::Empty(_))));
        assert!(segment_gops(&numbered(3), 0).is_err());
    }

    #[test]
    fn downsample_constant_and_identity() {
        let f = Frame::filled(6, 4, [0.5; 3]).unwrap();
        let d = downsample(&f, 2).unwrap();
        assert_eq!(d.dims(), (3, 2));
        assert!(d.data().iter().all(|&v| v == 0.5));
        assert_eq!(downsample(&f, 1).unwrap(), f);
        assert!(downsample(&f, 0).is_err());
    }

    #[test]
    fn downsample_two_by_two() {
        // rows [0,0] and [1,1]
        let f = Frame::new(2, 2, [0.0, 0.0, 1.0, 1.0].iter().flat_map(|&v| [v; 3]).collect()).unwrap();
        let d = downsample(&f, 2).unwrap();
        assert_eq!(d.dims(), (1, 1));
        assert_eq!(d.pixel(0, 0), [0.5; 3]);
    }

    #[test]
    fn downsample_pads_with_edge() {
        let f = Frame::from_fn(3, 1, |x, _| [x as f64 / 2.0; 3]).unwrap();
        let d = downsample(&f, 2).unwrap();
        assert_eq!(d.dims(), (2, 1));
        assert_eq!(d.get(1, 0, 0), 1.0);
    }

    #[test]
    fn frame_validation() {
        assert!(Frame::new(2, 2, vec![0.0; 11]).is_err());
        assert!(Frame::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(Frame::new(0, 1, vec![]).is_err());
        assert!(VideoSequence::new(vec![], 0.0).is_err());
    }

    #[test]
    fn duration() {
        assert_eq!(numbered(60).duration_secs(), 2.0);
    }
}
