//! SNR sweeps and the semantic-versus-classical comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_inputs, quality, streams, Chain, RunConfig, Transmitter};
use crate::error::{Error, Result};

/// One chain at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub snr_db: f64,
    pub chain: Chain,
    pub psnr_db: f64,
    pub ms_ssim: f64,
    pub air_bits: u64,
    pub wireless_delay_s: f64,
    pub decode_failures: u64,
    pub concealed_blocks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    pub rows: Vec<CurveRow>,
}

impl CurveData {
    /// Rows of one chain in sweep order.
    pub fn chain(&self, chain: Chain) -> Vec<CurveRow> {
        self.rows.iter().filter(|r| r.chain == chain).copied().collect()
    }

    /// Largest PSNR decrease between consecutive sweep points, walking from
    /// high to low SNR. Zero if quality never drops.
    pub fn max_adjacent_drop(&self, chain: Chain) -> f64 {
        let mut rows = self.chain(chain);
        rows.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
        rows.windows(2)
            .map(|w| w[1].psnr_db - w[0].psnr_db)
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(Self { rows })
    }
}

/// Sends the user clip through both chains at every SNR in `snr_list`.
/// Every point reuses the same noise realizations, scaled to its SNR.
pub fn snr_sweep(cfg: &RunConfig, snr_list: &[f64]) -> Result<CurveData> {
    cfg.validate()?;
    if snr_list.is_empty() {
        return Err(Error::Empty("SNR list"));
    }
    if let Some(bad) = snr_list.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sweep SNR must be finite, got {bad}"
        )));
    }
    let inputs = load_inputs(cfg)?;
    let tx = Transmitter::new(cfg)?;
    let link = &cfg.links.uplink;
    let points: Vec<(f64, Chain)> = snr_list
        .iter()
        .flat_map(|&s| Chain::ALL.map(|c| (s, c)))
        .collect();
    let rows = points
        .par_iter()
        .map(|&(snr_db, chain)| {
            let out = tx.send(&inputs.user, chain, snr_db, streams::SWEEP, link)?;
            let q = quality(out.video.frames(), inputs.user.frames())?;
            Ok(CurveRow {
                snr_db,
                chain,
                psnr_db: q.psnr_db,
                ms_ssim: q.ms_ssim,
                air_bits: out.stats.air_bits,
                wireless_delay_s: out.stats.wireless_delay_seconds,
                decode_failures: out.stats.decode_failures,
                concealed_blocks: out.stats.concealed_blocks,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CurveData { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: Chain,
    /// Mean over the sweep.
    pub air_bits: f64,
    pub mean_delay_s: f64,
    pub mean_psnr_db: f64,
    pub mean_ms_ssim: f64,
    /// Quality with a noiseless channel.
    pub channel_free_psnr_db: f64,
    pub max_adjacent_drop_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub throughput_bps: f64,
    pub classical: ChainSummary,
    pub semantic: ChainSummary,
    pub delay_reduction_s: f64,
    /// `100 · (classical − semantic) / classical` on mean wireless delay.
    pub delay_reduction_pct: f64,
    pub curve: CurveData,
}

/// Sweeps `cfg.sweep.snr_db` with both chains and summarizes delay and quality.
pub fn compare_baselines(cfg: &RunConfig) -> Result<ComparisonReport> {
    let curve = snr_sweep(cfg, &cfg.sweep.snr_db)?;
    let inputs = load_inputs(cfg)?;
    let tx = Transmitter::new(cfg)?;
    let link = &cfg.links.uplink;
    let summary = |chain: Chain| -> Result<ChainSummary> {
        let rows = curve.chain(chain);
        let n = rows.len() as f64;
        let clean = tx.send(&inputs.user, chain, f64::INFINITY, streams::SWEEP, link)?;
        Ok(ChainSummary {
            chain,
            air_bits: rows.iter().map(|r| r.air_bits as f64).sum::<f64>() / n,
            mean_delay_s: rows.iter().map(|r| r.wireless_delay_s).sum::<f64>() / n,
            mean_psnr_db: rows.iter().map(|r| r.psnr_db).sum::<f64>() / n,
            mean_ms_ssim: rows.iter().map(|r| r.ms_ssim).sum::<f64>() / n,
            channel_free_psnr_db: quality(clean.video.frames(), inputs.user.frames())?.psnr_db,
            max_adjacent_drop_db: curve.max_adjacent_drop(chain),
        })
    };
    let classical = summary(Chain::Classical)?;
    let semantic = summary(Chain::Semantic)?;
    let delay_reduction_s = classical.mean_delay_s - semantic.mean_delay_s;
    Ok(ComparisonReport {
        throughput_bps: link.throughput_bps,
        delay_reduction_pct: 100.0 * delay_reduction_s / classical.mean_delay_s,
        delay_reduction_s,
        classical,
        semantic,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(snr_db: f64, chain: Chain, psnr_db: f64) -> CurveRow {
        CurveRow {
            snr_db,
            chain,
            psnr_db,
            ms_ssim: 0.5,
            air_bits: 10,
            wireless_delay_s: 1.0,
            decode_failures: 0,
            concealed_blocks: 0,
        }
    }

    #[test]
    fn adjacent_drop_ignores_order_and_gains() {
        let c = CurveData {
            rows: vec![
                row(10.0, Chain::Classical, 40.0),
                row(0.0, Chain::Classical, 18.0),
                row(5.0, Chain::Classical, 39.0),
                row(0.0, Chain::Semantic, 20.0),
            ],
        };
        assert_eq!(c.max_adjacent_drop(Chain::Classical), 21.0);
        assert_eq!(c.max_adjacent_drop(Chain::Semantic), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let c = CurveData {
            rows: vec![
                row(-5.0, Chain::Semantic, 19.25),
                row(25.0, Chain::Classical, 48.0),
            ],
        };
        let text = c.to_csv().unwrap();
        assert!(text.starts_with("snr_db,chain,psnr_db,ms_ssim"));
        assert_eq!(CurveData::from_csv(&text).unwrap(), c);
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let mut cfg = RunConfig::reference();
        cfg.video.width = 24;
        cfg.video.height = 24;
        cfg.video.frames = 2;
        cfg.video.gop_size = 2;
        let snrs = [-10.0, 0.0, 10.0];
        let a = snr_sweep(&cfg, &snrs).unwrap();
        assert_eq!(a.rows.len(), 6);
        assert_eq!(a.chain(Chain::Semantic).len(), 3);
        let b = snr_sweep(&cfg, &snrs).unwrap();
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        assert!(snr_sweep(&cfg, &[]).is_err());
        assert!(snr_sweep(&cfg, &[f64::INFINITY]).is_err());
    }
}
