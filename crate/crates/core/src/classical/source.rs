//! Intra-only block-transform source coder standing in for H.264.
//!
//! Each frame is split into 16×16 macroblocks; each macroblock holds four 8×8
//! blocks per RGB channel. Blocks are DCT-coded with a quantizer step
//! `qp` (in 8-bit sample units, DC four times finer), zigzag scanned and run-length coded into
//! JPEG-style (run, size) symbols, then entropy coded with two canonical
//! prefix codes built per bitstream. DC prediction restarts at every
//! macroblock, and every macroblock payload is byte aligned and carries a
//! CRC-16, so a damaged macroblock can be detected and concealed on its own.
//!
//! Layout (big endian):
//!
//! ```text
//! "BDC1" | width u16 | height u16 | frames u16 | qp f32
//! | n_dc u16 | n_dc × (symbol u8, length u8)
//! | n_ac u16 | n_ac × (symbol u16, length u8)
//! | n_mb u32 | n_mb × (payload length u32, crc16 u16)
//! | header crc16 u16 | macroblock payloads...
//! ```

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::huffman::{code_lengths, crc16, BitReader, BitWriter, CanonicalCode};
use crate::error::{Error, Result};
use crate::transform::{zigzag, Dct};
use crate::video::{Frame, Gop, CHANNELS};

pub const MB: usize = 16;
const BLOCK: usize = 8;
const MAGIC: &[u8; 4] = b"BDC1";
const MAX_SIZE: u32 = 24;
const DC_SYMBOLS: usize = 32;
const AC_SYMBOLS: usize = 16 * 32;
const EOB: usize = 0;
const ZRL: usize = 15 * 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bitstream {
    /// Header followed by macroblock payloads.
    pub bytes: Vec<u8>,
    /// Byte range of each macroblock payload inside `bytes`.
    pub block_map: Vec<Range<usize>>,
}

impl Bitstream {
    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn header_len(&self) -> usize {
        self.block_map.first().map_or(self.bytes.len(), |r| r.start)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GopDims {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
}

impl GopDims {
    pub fn of(gop: &Gop) -> Self {
        let (width, height) = gop.dims();
        Self {
            width,
            height,
            frames: gop.len(),
        }
    }

    fn mbs_per_frame(&self) -> (usize, usize) {
        (self.width.div_ceil(MB), self.height.div_ceil(MB))
    }
}

/// Decoded GOP plus the number of macroblocks that had to be concealed.
#[derive(Debug, Clone)]
pub struct SourceDecoded {
    pub gop: Gop,
    pub concealed_blocks: usize,
}

fn magnitude_size(v: i64) -> u32 {
    64 - v.unsigned_abs().leading_zeros()
}

fn amplitude_bits(v: i64, size: u32) -> u64 {
    if v >= 0 {
        v as u64
    } else {
        ((v - 1) as u64) & ((1u64 << size) - 1)
    }
}

fn amplitude_value(bits: u64, size: u32) -> i64 {
    if size == 0 {
        return 0;
    }
    if bits >> (size - 1) == 1 {
        bits as i64
    } else {
        bits as i64 - (1i64 << size) + 1
    }
}

enum Token {
    Dc(i64),
    Ac { run: usize, value: i64 },
    Eob,
    Zrl,
}

/// Quantizer step of coefficient `i` (raster order); DC is quantized four
/// times finer than AC, as flat areas show DC error as visible banding.
fn step(qp: f64, i: usize) -> f64 {
    if i == 0 {
        qp / 4.0
    } else {
        qp
    }
}

fn quantized_blocks(frame: &Frame, mbx: usize, mby: usize, qp: f64, dct: &Dct) -> Vec<[i64; 64]> {
    let (w, h) = frame.dims();
    let mut out = Vec::with_capacity(4 * CHANNELS);
    let mut px = [0.0; 64];
    let mut coef = [0.0; 64];
    for c in 0..CHANNELS {
        for b in 0..4 {
            let x0 = mbx * MB + (b % 2) * BLOCK;
            let y0 = mby * MB + (b / 2) * BLOCK;
            for dy in 0..BLOCK {
                for dx in 0..BLOCK {
                    let x = (x0 + dx).min(w - 1);
                    let y = (y0 + dy).min(h - 1);
                    px[dy * BLOCK + dx] = frame.get(x, y, c) * 255.0 - 128.0;
                }
            }
            dct.forward(&px, &mut coef);
            let mut q = [0i64; 64];
            for (i, (qv, cv)) in q.iter_mut().zip(&coef).enumerate() {
                *qv = (cv / step(qp, i)).round() as i64;
            }
            out.push(q);
        }
    }
    out
}

fn tokenize(blocks: &[[i64; 64]], zz: &[usize], tokens: &mut Vec<Token>) {
    let mut pred = [0i64; CHANNELS];
    for (i, q) in blocks.iter().enumerate() {
        let c = i / 4;
        tokens.push(Token::Dc(q[0] - pred[c]));
        pred[c] = q[0];
        let last = (1..64).rev().find(|&k| q[zz[k]] != 0);
        if let Some(last) = last {
            let mut run = 0;
            for &pos in &zz[1..=last] {
                let v = q[pos];
                if v == 0 {
                    run += 1;
                    continue;
                }
                while run > 15 {
                    tokens.push(Token::Zrl);
                    run -= 16;
                }
                tokens.push(Token::Ac { run, value: v });
                run = 0;
            }
        }
        if last != Some(63) {
            tokens.push(Token::Eob);
        }
    }
}

/// Encodes a GOP at quantizer step `qp` (8-bit sample units).
pub fn source_encode(gop: &Gop, qp: f64) -> Result<Bitstream> {
    if !(qp > 0.0 && qp.is_finite()) {
        return Err(Error::InvalidArgument(format!("qp must be positive, got {qp}")));
    }
    if gop.is_empty() {
        return Err(Error::Empty("GOP has no frames"));
    }
    let dims = GopDims::of(gop);
    if dims.width > u16::MAX as usize || dims.height > u16::MAX as usize || dims.frames > u16::MAX as usize {
        return Err(Error::InvalidArgument(
            "GOP too large for the bitstream header".into(),
        ));
    }
    let dct = Dct::new(BLOCK);
    let zz = zigzag(BLOCK);
    let (mbw, mbh) = dims.mbs_per_frame();

    let mut per_mb: Vec<Vec<Token>> = Vec::with_capacity(mbw * mbh * dims.frames);
    for frame in gop.frames() {
        for mby in 0..mbh {
            for mbx in 0..mbw {
                let blocks = quantized_blocks(frame, mbx, mby, qp, &dct);
                let mut tokens = Vec::new();
                tokenize(&blocks, &zz, &mut tokens);
                per_mb.push(tokens);
            }
        }
    }

    let mut dc_freq = vec![0u64; DC_SYMBOLS];
    let mut ac_freq = vec![0u64; AC_SYMBOLS];
    for t in per_mb.iter().flatten() {
        match *t {
            Token::Dc(v) => {
                let s = magnitude_size(v);
                if s > MAX_SIZE {
                    return Err(Error::InvalidArgument(format!(
                        "qp {qp} too small: coefficient magnitude exceeds {MAX_SIZE} bits"
                    )));
                }
                dc_freq[s as usize] += 1;
            }
            Token::Ac { run, value } => {
                let s = magnitude_size(value);
                if s > MAX_SIZE {
                    return Err(Error::InvalidArgument(format!(
                        "qp {qp} too small: coefficient magnitude exceeds {MAX_SIZE} bits"
                    )));
                }
                ac_freq[run * 32 + s as usize] += 1;
            }
            Token::Eob => ac_freq[EOB] += 1,
            Token::Zrl => ac_freq[ZRL] += 1,
        }
    }
    let dc_len = code_lengths(&dc_freq);
    let ac_len = code_lengths(&ac_freq);
    let dc_code = CanonicalCode::from_lengths(&dc_len).expect("huffman lengths are complete");
    let ac_code = CanonicalCode::from_lengths(&ac_len).expect("huffman lengths are complete");

    let payloads: Vec<Vec<u8>> = per_mb
        .iter()
        .map(|tokens| {
            let mut w = BitWriter::new();
            for t in tokens {
                match *t {
                    Token::Dc(v) => {
                        let s = magnitude_size(v);
                        dc_code.encode(&mut w, s as usize);
                        w.put(amplitude_bits(v, s), s);
                    }
                    Token::Ac { run, value } => {
                        let s = magnitude_size(value);
                        ac_code.encode(&mut w, run * 32 + s as usize);
                        w.put(amplitude_bits(value, s), s);
                    }
                    Token::Eob => ac_code.encode(&mut w, EOB),
                    Token::Zrl => ac_code.encode(&mut w, ZRL),
                }
            }
            w.finish()
        })
        .collect();

    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(dims.width as u16).to_be_bytes());
    bytes.extend_from_slice(&(dims.height as u16).to_be_bytes());
    bytes.extend_from_slice(&(dims.frames as u16).to_be_bytes());
    bytes.extend_from_slice(&(qp as f32).to_be_bytes());
    let dc_used: Vec<usize> = (0..DC_SYMBOLS).filter(|&s| dc_len[s] > 0).collect();
    bytes.extend_from_slice(&(dc_used.len() as u16).to_be_bytes());
    for s in dc_used {
        bytes.push(s as u8);
        bytes.push(dc_len[s]);
    }
    let ac_used: Vec<usize> = (0..AC_SYMBOLS).filter(|&s| ac_len[s] > 0).collect();
    bytes.extend_from_slice(&(ac_used.len() as u16).to_be_bytes());
    for s in ac_used {
        bytes.extend_from_slice(&(s as u16).to_be_bytes());
        bytes.push(ac_len[s]);
    }
    bytes.extend_from_slice(&(payloads.len() as u32).to_be_bytes());
    for p in &payloads {
        bytes.extend_from_slice(&(p.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&crc16(p).to_be_bytes());
    }
    let hcrc = crc16(&bytes);
    bytes.extend_from_slice(&hcrc.to_be_bytes());

    let mut block_map = Vec::with_capacity(payloads.len());
    for p in payloads {
        let start = bytes.len();
        bytes.extend_from_slice(&p);
        block_map.push(start..bytes.len());
    }
    Ok(Bitstream { bytes, block_map })
}

struct Header {
    dims: GopDims,
    qp: f64,
    dc: CanonicalCode,
    ac: CanonicalCode,
    mbs: Vec<(Range<usize>, u16)>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::BadHeader("truncated header".into()))?;
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.is_empty() {
        return Err(Error::BadHeader("empty bitstream".into()));
    }
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::BadHeader("bad magic".into()));
    }
    let width = c.u16()? as usize;
    let height = c.u16()? as usize;
    let frames = c.u16()? as usize;
    let qp = f32::from_be_bytes(c.take(4)?.try_into().unwrap()) as f64;
    let mut dc_len = vec![0u8; DC_SYMBOLS];
    for _ in 0..c.u16()? {
        let s = c.u8()? as usize;
        let l = c.u8()?;
        *dc_len
            .get_mut(s)
            .ok_or_else(|| Error::BadHeader(format!("DC symbol {s} out of range")))? = l;
    }
    let mut ac_len = vec![0u8; AC_SYMBOLS];
    for _ in 0..c.u16()? {
        let s = c.u16()? as usize;
        let l = c.u8()?;
        *ac_len
            .get_mut(s)
            .ok_or_else(|| Error::BadHeader(format!("AC symbol {s} out of range")))? = l;
    }
    let n_mb = c.u32()? as usize;
    if n_mb > bytes.len() {
        return Err(Error::BadHeader("macroblock count exceeds stream size".into()));
    }
    let mut entries = Vec::with_capacity(n_mb);
    for _ in 0..n_mb {
        let len = c.u32()? as usize;
        let crc = c.u16()?;
        entries.push((len, crc));
    }
    let body_crc = crc16(&bytes[..c.pos]);
    if c.u16()? != body_crc {
        return Err(Error::BadHeader("header checksum mismatch".into()));
    }
    let dims = GopDims {
        width,
        height,
        frames,
    };
    let (mbw, mbh) = dims.mbs_per_frame();
    if width == 0 || height == 0 || frames == 0 || mbw * mbh * frames != n_mb {
        return Err(Error::BadHeader("inconsistent geometry".into()));
    }
    if !(qp > 0.0 && qp.is_finite()) {
        return Err(Error::BadHeader(format!("invalid qp {qp}")));
    }
    let dc = CanonicalCode::from_lengths(&dc_len)
        .ok_or_else(|| Error::BadHeader("invalid DC code lengths".into()))?;
    let ac = CanonicalCode::from_lengths(&ac_len)
        .ok_or_else(|| Error::BadHeader("invalid AC code lengths".into()))?;
    let mut pos = c.pos;
    let mbs = entries
        .into_iter()
        .map(|(len, crc)| {
            let r = pos..pos + len;
            pos += len;
            (r, crc)
        })
        .collect();
    Ok(Header {
        dims,
        qp,
        dc,
        ac,
        mbs,
    })
}

impl Bitstream {
    /// Rebuilds the macroblock map from a received byte stream.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        let header = parse_header(&bytes)?;
        let block_map = header.mbs.into_iter().map(|(r, _)| r).collect();
        Ok(Self { bytes, block_map })
    }
}

fn decode_mb(payload: &[u8], header: &Header, zz: &[usize]) -> Option<Vec<[i64; 64]>> {
    let mut r = BitReader::new(payload);
    let mut pred = [0i64; CHANNELS];
    let mut blocks = Vec::with_capacity(4 * CHANNELS);
    for i in 0..4 * CHANNELS {
        let c = i / 4;
        let mut q = [0i64; 64];
        let s = header.dc.decode(&mut r)? as u32;
        let diff = amplitude_value(r.bits(s)?, s);
        q[0] = pred[c] + diff;
        pred[c] = q[0];
        let mut k = 1;
        while k < 64 {
            let sym = header.ac.decode(&mut r)?;
            if sym == EOB {
                break;
            }
            if sym == ZRL {
                k += 16;
                continue;
            }
            let run = sym / 32;
            let size = (sym % 32) as u32;
            if size == 0 {
                return None;
            }
            k += run;
            if k >= 64 {
                return None;
            }
            q[zz[k]] = amplitude_value(r.bits(size)?, size);
            k += 1;
        }
        if k > 64 {
            return None;
        }
        blocks.push(q);
    }
    Some(blocks)
}

/// Decodes a bitstream whose geometry must match `dims`. Macroblocks failing
/// their checksum or entropy decoding are concealed from the previous decoded
/// frame (`reference` for the first frame of the GOP, mid-gray if absent).
pub fn source_decode(bs: &Bitstream, dims: GopDims) -> Result<SourceDecoded> {
    source_decode_with_reference(bs, dims, None)
}

pub fn source_decode_with_reference(
    bs: &Bitstream,
    dims: GopDims,
    reference: Option<&Frame>,
) -> Result<SourceDecoded> {
    let header = parse_header(&bs.bytes)?;
    if header.dims != dims {
        return Err(Error::BadHeader(format!(
            "header geometry {:?} does not match expected {:?}",
            header.dims, dims
        )));
    }
    let dct = Dct::new(BLOCK);
    let zz = zigzag(BLOCK);
    let (mbw, mbh) = dims.mbs_per_frame();
    let (w, h) = (dims.width, dims.height);
    let mut frames: Vec<Frame> = Vec::with_capacity(dims.frames);
    let mut concealed = 0;
    let mut coef = [0.0; 64];
    let mut px = [0.0; 64];
    for f in 0..dims.frames {
        let prev = if f == 0 { reference } else { frames.last() };
        let mut data = vec![0.0; w * h * CHANNELS];
        for mby in 0..mbh {
            for mbx in 0..mbw {
                let idx = (f * mbh + mby) * mbw + mbx;
                let (range, crc) = &header.mbs[idx];
                let blocks = bs
                    .bytes
                    .get(range.clone())
                    .filter(|p| crc16(p) == *crc)
                    .and_then(|p| decode_mb(p, &header, &zz));
                match blocks {
                    Some(blocks) => {
                        for (i, q) in blocks.iter().enumerate() {
                            let c = i / 4;
                            let b = i % 4;
                            for (i, (cv, &qv)) in coef.iter_mut().zip(q).enumerate() {
                                *cv = qv as f64 * step(header.qp, i);
                            }
                            dct.inverse(&coef, &mut px);
                            let x0 = mbx * MB + (b % 2) * BLOCK;
                            let y0 = mby * MB + (b / 2) * BLOCK;
                            for dy in 0..BLOCK {
                                for dx in 0..BLOCK {
                                    let (x, y) = (x0 + dx, y0 + dy);
                                    if x < w && y < h {
                                        data[(y * w + x) * CHANNELS + c] =
                                            ((px[dy * BLOCK + dx] + 128.0) / 255.0).clamp(0.0, 1.0);
                                    }
                                }
                            }
                        }
                    }
                    None => {
                        concealed += 1;
                        for y in mby * MB..((mby + 1) * MB).min(h) {
                            for x in mbx * MB..((mbx + 1) * MB).min(w) {
                                for c in 0..CHANNELS {
                                    data[(y * w + x) * CHANNELS + c] = prev.map_or(0.5, |p| p.get(x, y, c));
                                }
                            }
                        }
                    }
                }
            }
        }
        frames.push(Frame::new(w, h, data)?);
    }
    Ok(SourceDecoded {
        gop: Gop::new(frames)?,
        concealed_blocks: concealed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;

    fn constant_gop(size: usize) -> Gop {
        Gop::new(vec![Frame::filled(size, size, [0.4, 0.6, 0.2]).unwrap()]).unwrap()
    }

    fn smooth_gop() -> Gop {
        let frames = (0..2)
            .map(|t| {
                Frame::from_fn(40, 24, |x, y| {
                    let u = x as f64 / 40.0;
                    let v = y as f64 / 24.0;
                    [0.5 + 0.3 * (u * 6.0 + t as f64).sin(), v, 0.3 + 0.2 * u * v]
                })
                .unwrap()
            })
            .collect();
        Gop::new(frames).unwrap()
    }

    #[test]
    fn amplitude_coding_round_trips() {
        for v in [-300i64, -5, -1, 1, 2, 7, 1000] {
            let s = magnitude_size(v);
            assert_eq!(amplitude_value(amplitude_bits(v, s), s), v);
        }
    }

    #[test]
    fn constant_frame_compresses_and_decodes() {
        let gop = constant_gop(256);
        let bs = source_encode(&gop, 16.0).unwrap();
        let raw_bits = 256 * 256 * 3 * 8;
        let ratio = raw_bits as f64 / bs.bit_len() as f64;
        assert!(ratio > 50.0, "compression ratio {ratio}");
        let out = source_decode(&bs, GopDims::of(&gop)).unwrap();
        assert_eq!(out.concealed_blocks, 0);
        let p = psnr(&out.gop.frames()[0], &gop.frames()[0]).unwrap();
        assert!(p >= 50.0, "psnr {p}");
    }

    #[test]
    fn odd_sizes_round_trip() {
        let gop = smooth_gop();
        let bs = source_encode(&gop, 2.0).unwrap();
        let out = source_decode(&bs, GopDims::of(&gop)).unwrap();
        for (a, b) in out.gop.frames().iter().zip(gop.frames()) {
            assert!(psnr(a, b).unwrap() > 40.0);
        }
    }

    #[test]
    fn empty_and_mismatched_streams_fail() {
        let empty = Bitstream {
            bytes: vec![],
            block_map: vec![],
        };
        let dims = GopDims {
            width: 16,
            height: 16,
            frames: 1,
        };
        assert!(matches!(source_decode(&empty, dims), Err(Error::BadHeader(_))));
        let bs = source_encode(&constant_gop(32), 8.0).unwrap();
        assert!(source_decode(&bs, dims).is_err());
        let mut bad = bs.clone();
        bad.bytes[6] ^= 0x40;
        assert!(matches!(
            source_decode(&bad, GopDims::of(&constant_gop(32))),
            Err(Error::BadHeader(_))
        ));
    }

    #[test]
    fn corrupt_block_is_concealed_alone() {
        let gop = smooth_gop();
        let bs = source_encode(&gop, 4.0).unwrap();
        let mut bad = bs.clone();
        let r = bad.block_map[3].clone();
        bad.bytes[r.start] ^= 0x81;
        let out = source_decode(&bad, GopDims::of(&gop)).unwrap();
        assert_eq!(out.concealed_blocks, 1);
    }

    #[test]
    fn from_bytes_recovers_block_map() {
        let bs = source_encode(&smooth_gop(), 4.0).unwrap();
        let back = Bitstream::from_bytes(bs.bytes.clone()).unwrap();
        assert_eq!(back, bs);
    }

    #[test]
    fn rejects_bad_qp() {
        assert!(source_encode(&constant_gop(16), 0.0).is_err());
    }
}
