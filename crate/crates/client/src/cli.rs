//! `ceesim` command line. Every subcommand is one request to the service;
//! results land in `--out`.
//!
//! | subcommand    | files written                                           |
//! |---------------|---------------------------------------------------------|
//! | `transmit`    | `transmit.json`, `received.rgb` + `received.json`       |
//! | `sweep`       | `curves.csv`                                            |
//! | `composite`   | `composite_metrics.json`, `composite.rgb` + `.json`     |
//! | `reconstruct` | `reconstruct.json`, `scene.json`, `render.rgb` + `.json`|
//! | `pipeline`    | `report.json`, `delivered.*`, `composite.*`             |
//! | `compare`     | `compare.json`, `curves.csv`                            |

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ceesim_core::api::{EncodedVideo, PipelineRequest, SweepRequest, TransmitRequest};
use ceesim_core::pipeline::{Chain, RunConfig, VideoSource};
use ceesim_core::video::raw::save_raw;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::Client;

#[derive(Debug, Parser)]
#[command(
    name = "ceesim",
    version,
    about = "Cloud-edge-end semantic video service simulator (client)"
)]
pub struct Cli {
    /// Base URL of a running ceesim-server.
    #[arg(
        long,
        global = true,
        env = "CEESIM_SERVER",
        default_value = "http://127.0.0.1:8080"
    )]
    pub server: String,

    /// Run configuration (TOML). Defaults to the shipped reference config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Root seed; overrides the config's `seed` (and the benchmark seed for
    /// `reconstruct`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ChainArg {
    Semantic,
    Classical,
}

impl From<ChainArg> for Chain {
    fn from(c: ChainArg) -> Self {
        match c {
            ChainArg::Semantic => Chain::Semantic,
            ChainArg::Classical => Chain::Classical,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceArg {
    User,
    Background,
}

/// Accepts a number of dB or `inf`.
fn parse_snr(s: &str) -> std::result::Result<f64, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("invalid SNR {s:?}")),
    }
}

fn parse_finite_snr(s: &str) -> std::result::Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("sweep SNRs must be finite numbers, got {s:?}"))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Send one clip over one chain.
    Transmit {
        #[arg(long, value_enum, default_value = "semantic")]
        chain: ChainArg,
        /// Channel SNR in dB (`inf` for a noiseless link); default from config.
        #[arg(long, value_parser = parse_snr)]
        snr: Option<f64>,
        #[arg(long, value_enum, default_value = "user")]
        source: SourceArg,
    },
    /// PSNR/MS-SSIM versus SNR for both chains.
    Sweep {
        /// Comma-separated SNRs in dB; default from config.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_finite_snr)]
        snr: Option<Vec<f64>>,
    },
    /// Matte the user clip and composite it onto the background.
    Composite,
    /// Fit the synthetic Gaussian-scene benchmark.
    Reconstruct,
    /// Run the full service for one request.
    Pipeline {
        #[arg(long, value_enum, default_value = "semantic")]
        chain: ChainArg,
        /// Channel SNR in dB (`inf` for a noiseless link); default from config.
        #[arg(long, value_parser = parse_snr)]
        snr: Option<f64>,
        /// Skip scene reconstruction and rendering; deliver the composite.
        #[arg(long)]
        no_vsr: bool,
    },
    /// Delay and quality of both chains over the configured sweep.
    Compare,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::reference(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        if matches!(cli.command, Command::Reconstruct) {
            cfg.benchmark.scene.seed = seed;
        }
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_video(dir: &Path, name: &str, video: &EncodedVideo) -> Result<PathBuf> {
    let path = dir.join(name);
    save_raw(&video.decode()?, &path).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.with_extension("rgb"))
}

#[derive(Serialize)]
struct TransmitSummary<'a> {
    chain: Chain,
    #[serde(with = "ceesim_core::channel::snr_serde")]
    snr_db: f64,
    stats: &'a ceesim_core::TxStats,
    quality: &'a ceesim_core::pipeline::Quality,
}

/// Runs one parsed command line against the server. Returns the paths
/// written, in order.
pub async fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let mut config = load_config(&cli)?;
    let client = Client::new(&cli.server);
    let out = &cli.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    match cli.command {
        Command::Transmit { chain, snr, source } => {
            let source = match source {
                SourceArg::User => VideoSource::User,
                SourceArg::Background => VideoSource::Background,
            };
            let r = client
                .transmit(&TransmitRequest {
                    config,
                    chain: chain.into(),
                    snr_db: snr,
                    source,
                })
                .await?;
            println!(
                "{} at {} dB: PSNR {:.2} dB, MS-SSIM {:.4}, {} air bits, {:.3} s",
                r.chain,
                r.snr_db,
                r.quality.psnr_db,
                r.quality.ms_ssim,
                r.stats.air_bits,
                r.stats.wireless_delay_seconds
            );
            let summary = TransmitSummary {
                chain: r.chain,
                snr_db: r.snr_db,
                stats: &r.stats,
                quality: &r.quality,
            };
            written.push(write_json(out, "transmit.json", &summary)?);
            written.push(write_video(out, "received", &r.video)?);
        }
        Command::Sweep { snr } => {
            let curve = client.sweep(&SweepRequest { config, snr_db: snr }).await?;
            for r in &curve.rows {
                println!(
                    "{:>6.1} dB  {:<9}  PSNR {:6.2}  MS-SSIM {:.4}",
                    r.snr_db, r.chain, r.psnr_db, r.ms_ssim
                );
            }
            let path = out.join("curves.csv");
            fs::write(&path, curve.to_csv()?)?;
            written.push(path);
        }
        Command::Composite => {
            let r = client.composite(&config).await?;
            for (k, v) in &r.metrics {
                println!("{k}: {v:.4}");
            }
            written.push(write_json(out, "composite_metrics.json", &r.metrics)?);
            written.push(write_video(out, "composite", &r.video)?);
        }
        Command::Reconstruct => {
            let r = client.reconstruct(&config).await?;
            let m = &r.metrics;
            println!(
                "held-out PSNR {:.2} dB, center EPE {:.5}, PCK@{} {:.3}, loss {:.3e} -> {:.3e}",
                m.heldout_psnr_db, m.center_epe, m.pck_tolerance, m.center_pck, m.initial_loss, m.final_loss
            );
            written.push(write_json(out, "reconstruct.json", &r.metrics)?);
            let scene = out.join("scene.json");
            r.scene.save(&scene)?;
            written.push(scene);
            written.push(write_video(out, "render", &r.rendered)?);
        }
        Command::Pipeline { chain, snr, no_vsr } => {
            if let Some(s) = snr {
                config.channel.snr_db = s;
            }
            if no_vsr {
                config.vsr.enabled = false;
            }
            let r = client
                .pipeline(&PipelineRequest {
                    config,
                    chain: chain.into(),
                })
                .await?;
            for s in &r.report.stages {
                println!(
                    "{:<20} {:<9} {:>12.3} s",
                    format!("{:?}", s.stage),
                    format!("{:?}", s.status),
                    s.delay_s
                );
            }
            let t = &r.report.totals;
            println!(
                "total {:.3} s (wireless {:.3} s, fiber {:.6} s, compute {:.3} s)",
                t.total_s, t.wireless_s, t.fiber_s, t.compute_s
            );
            written.push(write_json(out, "report.json", &r.report)?);
            if let Some(v) = &r.delivered {
                written.push(write_video(out, "delivered", v)?);
            }
            if let Some(v) = &r.composite {
                written.push(write_video(out, "composite", v)?);
            }
            if !r.report.completed {
                let failed = r
                    .report
                    .stages
                    .iter()
                    .find_map(|s| s.error.as_deref())
                    .unwrap_or("unknown error");
                anyhow::bail!("service run failed: {failed}");
            }
        }
        Command::Compare => {
            let r = client.compare(&config).await?;
            for s in [&r.classical, &r.semantic] {
                println!(
                    "{:<9}  {:>10.0} air bits  {:>10.3} s  mean PSNR {:6.2} dB  (noiseless {:6.2} dB)",
                    s.chain, s.air_bits, s.mean_delay_s, s.mean_psnr_db, s.channel_free_psnr_db
                );
            }
            println!(
                "delay reduction {:.3} s ({:.2}%)",
                r.delay_reduction_s, r.delay_reduction_pct
            );
            written.push(write_json(out, "compare.json", &r)?);
            let path = out.join("curves.csv");
            fs::write(&path, r.curve.to_csv()?)?;
            written.push(path);
        }
    }
    Ok(written)
}
