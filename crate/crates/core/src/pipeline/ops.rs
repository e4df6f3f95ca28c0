//! Standalone transmission, compositing and scene-reconstruction runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{BenchmarkConfig, RunConfig, SynthesisConfig};
use super::{load_inputs, quality, streams, Chain, Quality, Transmission, Transmitter};
use crate::error::{Error, Result};
use crate::metrics::{epe, pck, psnr, PointSet3D};
use crate::scene::synthetic::desk_benchmark;
use crate::scene::{fit_scene, render, FitReport, GaussianScene};
use crate::synthesis::{
    composite, detail_loss, estimate_matte, fusion_terms, semantic_loss, temporal_median, transition_mask,
    AlphaMatte,
};
use crate::video::{Frame, VideoSequence};

/// Which configured input a standalone transmission sends.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoSource {
    /// User capture over the uplink.
    #[default]
    User,
    /// Background capture over the camera link.
    Background,
}

/// Sends one configured input over its wireless hop and scores it against
/// what was sent.
pub fn transmit_clip(
    cfg: &RunConfig,
    chain: Chain,
    snr_db: f64,
    source: VideoSource,
) -> Result<(Transmission, Quality)> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let tx = Transmitter::new(cfg)?;
    let (video, stream, link) = match source {
        VideoSource::User => (&inputs.user, streams::UPLINK, &cfg.links.uplink),
        VideoSource::Background => (&inputs.background, streams::CAMERA, &cfg.links.camera),
    };
    let out = tx.send(video, chain, snr_db, stream, link)?;
    let q = quality(out.video.frames(), video.frames())?;
    Ok((out, q))
}

/// Thumbnail factor of the coarse matte compared by the semantic loss.
const SEMANTIC_FACTOR: usize = 4;

#[derive(Debug, Clone)]
pub struct CompositeOutcome {
    pub video: VideoSequence,
    pub mattes: Vec<AlphaMatte>,
    /// Per-frame means. Loss and IoU entries are present only when the true
    /// coverage is known.
    pub metrics: BTreeMap<String, f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Mattes each user frame against the temporal-median clean plate and lays it
/// over the background frame with the same index (cycled if the background
/// is shorter).
pub fn synthesize(
    user: &VideoSequence,
    background: &VideoSequence,
    cfg: &SynthesisConfig,
    truth: Option<&[Vec<f64>]>,
) -> Result<CompositeOutcome> {
    if background.is_empty() {
        return Err(Error::Empty("background video"));
    }
    let plate = temporal_median(user.frames())?;
    let mut frames = Vec::with_capacity(user.len());
    let mut mattes = Vec::with_capacity(user.len());
    let (mut iou, mut fusion, mut sem, mut detail) = (vec![], vec![], vec![], vec![]);
    let mut coverage = Vec::with_capacity(user.len());
    for (t, x) in user.frames().iter().enumerate() {
        let b = &background.frames()[t % background.len()];
        let alpha = estimate_matte(x, &plate, cfg.threshold, cfg.softness)?;
        coverage.push(mean(alpha.values()));
        if let Some(truth) = truth {
            let (w, h) = x.dims();
            let gt = AlphaMatte::new(w, h, truth[t].clone())?;
            iou.push(alpha.iou(&gt)?);
            fusion.push(fusion_terms(&alpha, &gt, x, b)?.total());
            sem.push(semantic_loss(
                &alpha.downsample(SEMANTIC_FACTOR)?,
                &gt,
                SEMANTIC_FACTOR,
            )?);
            detail.push(detail_loss(
                &alpha,
                &gt,
                &transition_mask(&gt, cfg.transition_radius.max(1))?,
            )?);
        }
        frames.push(composite(x, b, &alpha)?);
        mattes.push(alpha);
    }
    let mut metrics = BTreeMap::new();
    metrics.insert("foreground_coverage".to_string(), mean(&coverage));
    if truth.is_some() {
        metrics.insert("matte_iou".to_string(), mean(&iou));
        metrics.insert("fusion_loss".to_string(), mean(&fusion));
        metrics.insert("semantic_loss".to_string(), mean(&sem));
        metrics.insert("detail_loss".to_string(), mean(&detail));
    }
    Ok(CompositeOutcome {
        video: VideoSequence::new(frames, user.fps())?,
        mattes,
        metrics,
    })
}

/// Composites the configured inputs directly, with no channel in between.
pub fn composite_inputs(cfg: &RunConfig) -> Result<CompositeOutcome> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    synthesize(
        &inputs.user,
        &inputs.background,
        &cfg.synthesis,
        inputs.truth_alpha.as_deref(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructMetrics {
    /// Render PSNR on the frame left out of the fit.
    pub heldout_psnr_db: f64,
    /// Mean 3D distance between fitted and true Gaussian centers over all
    /// frames.
    pub center_epe: f64,
    /// Fraction of centers within the tolerance.
    pub center_pck: f64,
    pub pck_tolerance: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone)]
pub struct ReconstructOutcome {
    pub metrics: ReconstructMetrics,
    pub scene: GaussianScene,
    pub rendered: VideoSequence,
    pub report: FitReport,
}

fn all_centers(scene: &GaussianScene) -> Result<PointSet3D> {
    PointSet3D::new(scene.centers().into_iter().flatten().collect())
}

/// Fits the synthetic desk benchmark from its perturbed start and scores the
/// result against ground truth.
pub fn reconstruct_benchmark(cfg: &BenchmarkConfig) -> Result<ReconstructOutcome> {
    let bench = desk_benchmark(&cfg.scene)?;
    let mut fit_cfg = cfg.fit.clone();
    if !fit_cfg.holdout.contains(&bench.holdout) {
        fit_cfg.holdout.push(bench.holdout);
    }
    let (scene, report) = fit_scene(&bench.inputs, bench.init, &fit_cfg)?;
    let rendered: Vec<Frame> = (0..scene.timesteps())
        .map(|t| render(&scene, t).map(|r| r.image))
        .collect::<Result<_>>()?;
    let heldout_psnr_db = psnr(&rendered[bench.holdout], &bench.inputs.frames[bench.holdout])?;
    let fitted = all_centers(&scene)?;
    let truth = all_centers(&bench.truth)?;
    let tol = cfg.tolerance();
    let metrics = ReconstructMetrics {
        heldout_psnr_db,
        center_epe: epe(&fitted, &truth)?,
        center_pck: pck(&fitted, &truth, tol)?,
        pck_tolerance: tol,
        initial_loss: report.initial_loss,
        final_loss: report.final_loss,
        accepted_steps: report.accepted,
        rejected_steps: report.rejected,
    };
    Ok(ReconstructOutcome {
        metrics,
        scene,
        rendered: VideoSequence::new(rendered, 30.0)?,
        report,
    })
}
