//! One service request end to end:
//!
//! 1. user video, end → edge (wireless)
//! 2. background video, camera → edge (wireless)
//! 3. both videos, edge → cloud (fiber)
//! 4. compositing in the cloud
//! 5. scene reconstruction in the cloud
//! 6. scene to the edge (fiber) and rendering there
//! 7. rendered video, edge → end (wireless)
//!
//! Stages run in order. The first failing stage is marked failed and every
//! later stage is marked aborted. With reconstruction disabled, stages 5 and
//! 6 are skipped and the composite itself is delivered.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::latency::{LinkKind, LinkSpec, NodeSpec, Role};
use super::ops::synthesize;
use super::{load_inputs, quality, raw_bits, streams, Chain, Inputs, RunConfig, Transmitter};
use crate::channel::{mix_seed, snr_serde};
use crate::error::Result;
use crate::scene::{
    fit_scene, initialize_from_video, render, Camera, FitInputs, FitReport, GaussianScene, RigidTransform,
};
use crate::video::{Frame, VideoSequence};
use crate::TxStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ServiceRequest {
    pub chain: Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    UploadUserVideo,
    UploadBackground,
    EdgeToCloud,
    VsCompute,
    VsrCompute,
    EdgeRender,
    Download3dVideo,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::UploadUserVideo,
        Stage::UploadBackground,
        Stage::EdgeToCloud,
        Stage::VsCompute,
        Stage::VsrCompute,
        Stage::EdgeRender,
        Stage::Download3dVideo,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Skipped,
    Failed,
    /// Not run because an earlier stage failed.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub link: Option<LinkKind>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub node: Option<Role>,
    /// Bits put on the link (air bits on wireless hops).
    pub payload_bits: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tx: Option<TxStats>,
    pub transmission_s: f64,
    pub compute_s: f64,
    pub delay_s: f64,
    pub metrics: BTreeMap<String, f64>,
}

impl StageReport {
    fn pending(stage: Stage, status: StageStatus) -> Self {
        Self {
            stage,
            status,
            error: None,
            link: None,
            node: None,
            payload_bits: 0,
            tx: None,
            transmission_s: 0.0,
            compute_s: 0.0,
            delay_s: 0.0,
            metrics: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ServiceTotals {
    pub wireless_s: f64,
    pub fiber_s: f64,
    pub compute_s: f64,
    pub total_s: f64,
    pub air_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceReport {
    pub chain: Chain,
    pub seed: u64,
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
    pub completed: bool,
    pub stages: Vec<StageReport>,
    pub totals: ServiceTotals,
}

impl ServiceReport {
    pub fn stage(&self, stage: Stage) -> &StageReport {
        self.stages
            .iter()
            .find(|s| s.stage == stage)
            .expect("every stage is reported")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn totals(stages: &[StageReport]) -> ServiceTotals {
    let mut t = ServiceTotals::default();
    for s in stages {
        match s.link {
            Some(LinkKind::Wireless) => t.wireless_s += s.transmission_s,
            Some(LinkKind::Fiber) => t.fiber_s += s.transmission_s,
            None => {}
        }
        t.compute_s += s.compute_s;
        t.total_s += s.delay_s;
        if s.link == Some(LinkKind::Wireless) {
            t.air_bits += s.payload_bits;
        }
    }
    t
}

#[derive(Debug, Clone)]
pub struct ServiceOutcome {
    pub report: ServiceReport,
    /// The composite produced in the cloud, if stage 4 completed.
    pub composite: Option<VideoSequence>,
    /// What the user device received, if the run completed.
    pub delivered: Option<VideoSequence>,
}

/// State handed from stage to stage.
#[derive(Default)]
struct Carry {
    user_rx: Option<VideoSequence>,
    background_rx: Option<VideoSequence>,
    composite: Option<VideoSequence>,
    local_composite: Option<VideoSequence>,
    scene: Option<GaussianScene>,
    rendered: Option<VideoSequence>,
    delivered: Option<VideoSequence>,
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    chain: Chain,
    tx: Transmitter<'a>,
    inputs: Inputs,
    carry: Carry,
}

fn wireless(report: &mut StageReport, link: &LinkSpec, stats: TxStats) {
    report.link = Some(link.kind);
    report.payload_bits = stats.air_bits;
    report.transmission_s = stats.wireless_delay_seconds;
    report.delay_s = report.transmission_s;
    report.tx = Some(stats);
}

fn compute(report: &mut StageReport, node: &NodeSpec, flop: f64) {
    report.node = Some(node.role);
    report.compute_s = flop / node.compute_flops;
    report.delay_s = report.transmission_s + report.compute_s;
}

fn taken<T>(slot: &Option<T>) -> &T {
    slot.as_ref().expect("produced by an earlier stage")
}

impl Runner<'_> {
    fn run(&mut self, stage: Stage, r: &mut StageReport) -> Result<()> {
        let cfg = self.cfg;
        let snr = cfg.channel.snr_db;
        match stage {
            Stage::UploadUserVideo => {
                let link = &cfg.links.uplink;
                let out = self
                    .tx
                    .send(&self.inputs.user, self.chain, snr, streams::UPLINK, link)?;
                let q = quality(out.video.frames(), self.inputs.user.frames())?;
                wireless(r, link, out.stats);
                r.metrics.insert("psnr_db".into(), q.psnr_db);
                r.metrics.insert("ms_ssim".into(), q.ms_ssim);
                self.carry.user_rx = Some(out.video);
            }
            Stage::UploadBackground => {
                let link = &cfg.links.camera;
                let out = self
                    .tx
                    .send(&self.inputs.background, self.chain, snr, streams::CAMERA, link)?;
                let q = quality(out.video.frames(), self.inputs.background.frames())?;
                wireless(r, link, out.stats);
                r.metrics.insert("psnr_db".into(), q.psnr_db);
                r.metrics.insert("ms_ssim".into(), q.ms_ssim);
                self.carry.background_rx = Some(out.video);
            }
            Stage::EdgeToCloud => {
                let link = &cfg.links.backhaul;
                let bits = raw_bits(taken(&self.carry.user_rx)) + raw_bits(taken(&self.carry.background_rx));
                r.link = Some(link.kind);
                r.payload_bits = bits;
                r.transmission_s = link.transmission_seconds(bits);
                r.delay_s = r.transmission_s;
            }
            Stage::VsCompute => {
                let truth = self.inputs.truth_alpha.as_deref();
                let out = synthesize(
                    taken(&self.carry.user_rx),
                    taken(&self.carry.background_rx),
                    &cfg.synthesis,
                    truth,
                )?;
                let local = synthesize(&self.inputs.user, &self.inputs.background, &cfg.synthesis, truth)?;
                let q = quality(out.video.frames(), local.video.frames())?;
                r.metrics = out.metrics;
                r.metrics.insert("psnr_vs_local_db".into(), q.psnr_db);
                r.metrics.insert("ms_ssim_vs_local".into(), q.ms_ssim);
                compute(r, &cfg.nodes.cloud, cfg.compute.vs_flop);
                self.carry.composite = Some(out.video);
                self.carry.local_composite = Some(local.video);
            }
            Stage::VsrCompute => {
                let composite = taken(&self.carry.composite);
                let (scene, report) = reconstruct(composite, cfg)?;
                r.metrics
                    .insert("gaussians".into(), scene.gaussians().len() as f64);
                r.metrics.insert("initial_loss".into(), report.initial_loss);
                r.metrics.insert("final_loss".into(), report.final_loss);
                compute(r, &cfg.nodes.cloud, cfg.compute.vsr_flop);
                self.carry.scene = Some(scene);
            }
            Stage::EdgeRender => {
                let scene = taken(&self.carry.scene);
                let link = &cfg.links.backhaul;
                let bits = scene.to_json()?.len() as u64 * 8;
                r.link = Some(link.kind);
                r.payload_bits = bits;
                r.transmission_s = link.transmission_seconds(bits);
                let frames: Vec<Frame> = (0..scene.timesteps())
                    .map(|t| render(scene, t).map(|x| x.image))
                    .collect::<Result<_>>()?;
                let composite = taken(&self.carry.composite);
                let video = VideoSequence::new(frames, composite.fps())?;
                let q = quality(video.frames(), composite.frames())?;
                r.metrics.insert("psnr_vs_composite_db".into(), q.psnr_db);
                r.metrics.insert("ms_ssim_vs_composite".into(), q.ms_ssim);
                compute(r, &cfg.nodes.edge, cfg.compute.render_flop);
                self.carry.rendered = Some(video);
            }
            Stage::Download3dVideo => {
                let link = &cfg.links.downlink;
                let sent = self
                    .carry
                    .rendered
                    .as_ref()
                    .unwrap_or_else(|| taken(&self.carry.composite));
                let out = self.tx.send(sent, self.chain, snr, streams::DOWNLINK, link)?;
                let q = quality(out.video.frames(), sent.frames())?;
                let e2e = quality(out.video.frames(), taken(&self.carry.local_composite).frames())?;
                wireless(r, link, out.stats);
                r.metrics.insert("psnr_db".into(), q.psnr_db);
                r.metrics.insert("ms_ssim".into(), q.ms_ssim);
                r.metrics.insert("psnr_vs_local_composite_db".into(), e2e.psnr_db);
                r.metrics.insert("ms_ssim_vs_local_composite".into(), e2e.ms_ssim);
                self.carry.delivered = Some(out.video);
            }
        }
        Ok(())
    }
}

/// Gaussian sheet in front of a static camera, fitted to the composite with
/// a flat-plane depth prior.
fn reconstruct(video: &VideoSequence, cfg: &RunConfig) -> Result<(GaussianScene, FitReport)> {
    let (w, h) = video.dims().expect("composite is non-empty");
    let v = &cfg.vsr;
    let camera = Camera::centered(v.focal, w, h, RigidTransform::IDENTITY)?;
    let cameras = vec![camera; video.len()];
    let first = &video.frames()[0];
    let init = initialize_from_video(
        video.frames(),
        &cameras,
        v.grid,
        v.depth,
        v.fit.bases,
        first.channel_means(),
        mix_seed(cfg.seed, streams::VSR_INIT),
    )?;
    let inputs = FitInputs {
        frames: video.frames().to_vec(),
        depths: vec![vec![v.depth; w * h]; video.len()],
        tracks: Vec::new(),
        cameras,
    };
    let (scene, report) = fit_scene(&inputs, init, &v.fit)?;
    Ok((scene, report))
}

/// Runs one request through all stages.
///
/// Configuration and input-loading errors are returned as `Err`; failures
/// inside a stage are recorded in the report instead.
pub fn run_service(request: &ServiceRequest, cfg: &RunConfig) -> Result<ServiceOutcome> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let mut runner = Runner {
        cfg,
        chain: request.chain,
        tx: Transmitter::new(cfg)?,
        inputs,
        carry: Carry::default(),
    };
    let mut stages = Vec::with_capacity(Stage::ALL.len());
    let mut failed = false;
    for stage in Stage::ALL {
        if failed {
            stages.push(StageReport::pending(stage, StageStatus::Aborted));
            continue;
        }
        if !cfg.vsr.enabled && matches!(stage, Stage::VsrCompute | Stage::EdgeRender) {
            stages.push(StageReport::pending(stage, StageStatus::Skipped));
            continue;
        }
        let mut report = StageReport::pending(stage, StageStatus::Completed);
        if let Err(e) = runner.run(stage, &mut report) {
            tracing::warn!(?stage, error = %e, "service stage failed");
            report = StageReport::pending(stage, StageStatus::Failed);
            report.error = Some(e.to_string());
            failed = true;
        }
        stages.push(report);
    }
    let report = ServiceReport {
        chain: request.chain,
        seed: cfg.seed,
        snr_db: cfg.channel.snr_db,
        completed: !failed,
        totals: totals(&stages),
        stages,
    };
    Ok(ServiceOutcome {
        report,
        composite: runner.carry.composite,
        delivered: runner.carry.delivered,
    })
}
