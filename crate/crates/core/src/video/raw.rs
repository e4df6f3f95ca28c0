//! Raw video container: `<name>.rgb` holds planar 8-bit RGB, frame after
//! frame (all R samples of a frame, then G, then B); `<name>.json` is the
//! sidecar header:
//!
//! ```json
//! { "width": 64, "height": 64, "fps": 30.0, "frames": 8 }
//! ```
//!
//! Samples are quantized as `round(v * 255)` on save and read back as
//! `byte / 255`, so save∘load is exact for any sequence that was itself
//! loaded from disk.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Frame, VideoSequence, CHANNELS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawHeader {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frames: usize,
}

/// Resolves `<name>`, `<name>.rgb` or `<name>.json` to the payload/sidecar pair.
pub fn container_paths(path: &Path) -> (PathBuf, PathBuf) {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("rgb") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut rgb = base.clone().into_os_string();
    rgb.push(".rgb");
    let mut json = base.into_os_string();
    json.push(".json");
    (rgb.into(), json.into())
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn dequantize(b: u8) -> f64 {
    b as f64 / 255.0
}

/// Planar 8-bit payload of a sequence.
pub fn encode_payload(video: &VideoSequence) -> Vec<u8> {
    let mut out = Vec::new();
    for f in video.frames() {
        for c in 0..CHANNELS {
            out.extend(f.data().iter().skip(c).step_by(CHANNELS).map(|&v| quantize(v)));
        }
    }
    out
}

pub fn decode_payload(header: &RawHeader, bytes: &[u8]) -> Result<VideoSequence> {
    let plane = header.width * header.height;
    let frame_bytes = plane * CHANNELS;
    let expected = frame_bytes * header.frames;
    if bytes.len() != expected {
        return Err(Error::CorruptVideo(format!(
            "header promises {} frames of {}x{} ({} bytes), payload has {} bytes",
            header.frames,
            header.width,
            header.height,
            expected,
            bytes.len()
        )));
    }
    let mut frames = Vec::with_capacity(header.frames);
    for chunk in bytes.chunks_exact(frame_bytes.max(1)).take(header.frames) {
        let mut data = vec![0.0; frame_bytes];
        for c in 0..CHANNELS {
            for (i, &b) in chunk[c * plane..(c + 1) * plane].iter().enumerate() {
                data[i * CHANNELS + c] = dequantize(b);
            }
        }
        frames.push(Frame::new(header.width, header.height, data)?);
    }
    VideoSequence::new(frames, header.fps)
}

pub fn header_of(video: &VideoSequence) -> RawHeader {
    let (width, height) = video.dims().unwrap_or((0, 0));
    RawHeader {
        width,
        height,
        fps: video.fps(),
        frames: video.len(),
    }
}

pub fn save_raw(video: &VideoSequence, path: &Path) -> Result<()> {
    let (rgb, json) = container_paths(path);
    fs::write(&rgb, encode_payload(video))?;
    fs::write(&json, serde_json::to_string_pretty(&header_of(video))?)?;
    Ok(())
}

pub fn load_raw(path: &Path) -> Result<VideoSequence> {
    let (rgb, json) = container_paths(path);
    let header: RawHeader = serde_json::from_slice(&fs::read(&json)?)
        .map_err(|e| Error::CorruptVideo(format!("sidecar {}: {e}", json.display())))?;
    let bytes = fs::read(&rgb)?;
    decode_payload(&header, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip() -> VideoSequence {
        let frames = (0..3)
            .map(|t| {
                Frame::from_fn(5, 4, |x, y| {
                    [
                        dequantize(((x * 37 + y * 11 + t * 5) % 256) as u8),
                        dequantize(((x * 3 + t) % 256) as u8),
                        dequantize(((y * 61) % 256) as u8),
                    ]
                })
                .unwrap()
            })
            .collect();
        VideoSequence::new(frames, 30.0).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip");
        let v = clip();
        save_raw(&v, &path).unwrap();
        let back = load_raw(&path.with_extension("rgb")).unwrap();
        assert_eq!(back, v);

        let bytes = fs::read(dir.path().join("clip.rgb")).unwrap();
        save_raw(&back, &dir.path().join("again")).unwrap();
        assert_eq!(fs::read(dir.path().join("again.rgb")).unwrap(), bytes);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip");
        save_raw(&clip(), &path).unwrap();
        let rgb = dir.path().join("clip.rgb");
        let mut bytes = fs::read(&rgb).unwrap();
        bytes.truncate(bytes.len() - 7);
        fs::write(&rgb, bytes).unwrap();
        assert!(matches!(load_raw(&path), Err(Error::CorruptVideo(_))));
    }

    #[test]
    fn sidecar_fields() {
        let h = header_of(&clip());
        let json = serde_json::to_value(h).unwrap();
        for key in ["width", "height", "fps", "frames"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn duration_from_header() {
        let header = RawHeader {
            width: 1,
            height: 1,
            fps: 30.0,
            frames: 60,
        };
        let v = decode_payload(&header, &[0u8; 180]).unwrap();
        assert_eq!(v.duration_secs(), 2.0);
    }
}
