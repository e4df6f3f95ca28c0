//! Service orchestration: config, latency model, wireless hops, the full
//! end→edge→cloud→edge→end service run, SNR sweeps and chain comparison.

pub mod config;
pub mod latency;
pub mod ops;
pub mod service;
pub mod sweep;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::RunConfig;
pub use latency::{stage_latency, LinkKind, LinkSpec, NodeSpec, Role};
pub use ops::{
    composite_inputs, reconstruct_benchmark, transmit_clip, CompositeOutcome, ReconstructMetrics,
    ReconstructOutcome, VideoSource,
};
pub use service::{
    run_service, ServiceOutcome, ServiceReport, ServiceRequest, Stage, StageReport, StageStatus,
};
pub use sweep::{compare_baselines, snr_sweep, ChainSummary, ComparisonReport, CurveData, CurveRow};

use crate::channel::{mix_seed, ChannelConfig};
use crate::classical::{classical_air_bits, classical_transmit, LdpcCode};
use crate::error::{Error, Result};
use crate::metrics::{sequence_ms_ssim, sequence_psnr, MsSsimParams};
use crate::semantic::{semantic_transmit, symbol_budget_for, SymbolBudget};
use crate::video::raw::load_raw;
use crate::video::synthetic::{background_clip, user_clip};
use crate::video::{segment_gops, Frame, VideoSequence};
use crate::TxStats;

/// Noise stream identifiers; each wireless hop draws from its own stream.
pub(crate) mod streams {
    pub const UPLINK: u64 = 1;
    pub const CAMERA: u64 = 2;
    pub const DOWNLINK: u64 = 3;
    pub const SWEEP: u64 = 4;
    pub const VSR_INIT: u64 = 5;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chain {
    Classical,
    #[default]
    Semantic,
}

impl Chain {
    pub const ALL: [Chain; 2] = [Chain::Classical, Chain::Semantic];
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Chain::Classical => "classical",
            Chain::Semantic => "semantic",
        })
    }
}

impl FromStr for Chain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Chain::Classical),
            "semantic" => Ok(Chain::Semantic),
            other => Err(Error::InvalidArgument(format!(
                "unknown chain {other:?} (expected classical or semantic)"
            ))),
        }
    }
}

/// PSNR and MS-SSIM of a received sequence against what was sent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub psnr_db: f64,
    pub ms_ssim: f64,
}

pub fn quality(received: &[Frame], sent: &[Frame]) -> Result<Quality> {
    let first = sent.first().ok_or(Error::Empty("frames"))?;
    let params = MsSsimParams::for_dims(first.width(), first.height());
    Ok(Quality {
        psnr_db: sequence_psnr(received, sent)?,
        ms_ssim: sequence_ms_ssim(received, sent, &params)?,
    })
}

/// Service inputs: the user capture, the remote background and, for
/// synthetic clips, the true foreground coverage per frame.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub user: VideoSequence,
    pub background: VideoSequence,
    pub truth_alpha: Option<Vec<Vec<f64>>>,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let v = &cfg.video;
    let (user, truth_alpha) = match &v.user_path {
        Some(p) => (load_raw(p)?, None),
        None => {
            let clip = user_clip(v.width, v.height, v.frames, v.fps)?;
            (clip.video, Some(clip.alpha))
        }
    };
    let background = match &v.background_path {
        Some(p) => load_raw(p)?,
        None => background_clip(v.width, v.height, v.frames, v.fps)?,
    };
    if user.is_empty() || background.is_empty() {
        return Err(Error::Empty("input video"));
    }
    if user.dims() != background.dims() {
        return Err(Error::DimensionMismatch(format!(
            "user video is {:?}, background is {:?}",
            user.dims(),
            background.dims()
        )));
    }
    Ok(Inputs {
        user,
        background,
        truth_alpha,
    })
}

/// A video after one hop.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub video: VideoSequence,
    pub stats: TxStats,
}

/// Sends videos over wireless hops with either chain. Holds the LDPC code so
/// it is built once per run.
pub struct Transmitter<'a> {
    cfg: &'a RunConfig,
    code: LdpcCode,
}

impl<'a> Transmitter<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self> {
        Ok(Self {
            cfg,
            code: LdpcCode::new(cfg.classical.ldpc)?,
        })
    }

    /// GOP-by-GOP transmission at `snr_db`. `stream` selects the noise stream;
    /// GOP `g` uses the derived seed `mix(mix(seed, stream), g)`. The wireless
    /// delay is charged at the throughput of `link`.
    pub fn send(
        &self,
        video: &VideoSequence,
        chain: Chain,
        snr_db: f64,
        stream: u64,
        link: &LinkSpec,
    ) -> Result<Transmission> {
        let cfg = self.cfg;
        let gops = segment_gops(video, cfg.video.gop_size)?;
        let base = mix_seed(cfg.seed, stream);
        let channel = |g: usize| ChannelConfig::new(snr_db, mix_seed(base, g as u64));
        let mut stats = TxStats::default();
        let mut frames = Vec::with_capacity(video.len());
        match chain {
            Chain::Classical => {
                let c = &cfg.classical;
                let mut reference: Option<Frame> = None;
                for (g, gop) in gops.iter().enumerate() {
                    let (out, s) = classical_transmit(
                        gop,
                        &channel(g)?,
                        c.qp,
                        &self.code,
                        c.max_iters,
                        reference.as_ref(),
                    )?;
                    reference = out.frames().last().cloned();
                    stats.accumulate(&s);
                    frames.extend(out.into_frames());
                }
            }
            Chain::Semantic => {
                let sc = &cfg.semantic;
                let results: Vec<_> = gops
                    .par_iter()
                    .enumerate()
                    .map(|(g, gop)| {
                        let classical = match sc.budget {
                            SymbolBudget::ClassicalRatio(_) => {
                                Some(classical_air_bits(gop, cfg.classical.qp, &self.code)?)
                            }
                            _ => None,
                        };
                        let budget = symbol_budget_for(gop, sc, classical)?;
                        semantic_transmit(gop, &channel(g)?, sc, budget)
                    })
                    .collect::<Result<_>>()?;
                for (out, s) in results {
                    stats.accumulate(&s);
                    frames.extend(out.into_frames());
                }
            }
        }
        stats.wireless_delay_seconds = link.transmission_seconds(stats.air_bits);
        Ok(Transmission {
            video: VideoSequence::new(frames, video.fps())?,
            stats,
        })
    }
}

/// Bits of a sequence stored as 8-bit RGB.
pub fn raw_bits(video: &VideoSequence) -> u64 {
    video
        .frames()
        .iter()
        .map(|f| (f.width() * f.height() * 3 * 8) as u64)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        let mut cfg = RunConfig::reference();
        cfg.video.width = 24;
        cfg.video.height = 24;
        cfg.video.frames = 4;
        cfg.video.gop_size = 2;
        cfg
    }

    #[test]
    fn chain_names_round_trip() {
        for c in Chain::ALL {
            assert_eq!(c.to_string().parse::<Chain>().unwrap(), c);
        }
        assert!("digital".parse::<Chain>().is_err());
    }

    #[test]
    fn synthetic_inputs_match_config() {
        let cfg = small_config();
        let inputs = load_inputs(&cfg).unwrap();
        assert_eq!(inputs.user.len(), 4);
        assert_eq!(inputs.user.dims(), Some((24, 24)));
        assert_eq!(inputs.background.dims(), Some((24, 24)));
        assert_eq!(inputs.truth_alpha.as_ref().map(Vec::len), Some(4));
    }

    #[test]
    fn transmission_is_deterministic_and_priced() {
        let cfg = small_config();
        let inputs = load_inputs(&cfg).unwrap();
        let tx = Transmitter::new(&cfg).unwrap();
        for chain in Chain::ALL {
            let a = tx.send(&inputs.user, chain, 0.0, 1, &cfg.links.uplink).unwrap();
            let b = tx.send(&inputs.user, chain, 0.0, 1, &cfg.links.uplink).unwrap();
            assert_eq!(a.video, b.video);
            assert_eq!(a.stats, b.stats);
            assert_eq!(a.video.len(), inputs.user.len());
            let expect = a.stats.air_bits as f64 / cfg.links.uplink.throughput_bps;
            assert_eq!(a.stats.wireless_delay_seconds, expect);
        }
    }

    #[test]
    fn semantic_is_cheaper_than_classical() {
        let cfg = RunConfig::reference();
        let inputs = load_inputs(&cfg).unwrap();
        let tx = Transmitter::new(&cfg).unwrap();
        let c = tx
            .send(&inputs.user, Chain::Classical, 10.0, 1, &cfg.links.uplink)
            .unwrap();
        let s = tx
            .send(&inputs.user, Chain::Semantic, 10.0, 1, &cfg.links.uplink)
            .unwrap();
        assert!(s.stats.air_bits < c.stats.air_bits / 10);
    }

    #[test]
    fn raw_bit_count() {
        let cfg = small_config();
        let inputs = load_inputs(&cfg).unwrap();
        assert_eq!(raw_bits(&inputs.user), 4 * 24 * 24 * 24);
    }
}
