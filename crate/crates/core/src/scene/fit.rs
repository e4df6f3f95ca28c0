//! Scene fitting: image, depth and 2D-track losses minimized with Adam.
//!
//! Every proposed step is evaluated before it is taken. A step that would
//! raise the objective is halved a few times and dropped if it still does,
//! so the objective never increases across accepted iterations.
//!
//! Residuals go through the Charbonnier penalty `√(r² + ε²) − ε`, a smooth
//! L1. The depth residual at a pixel is `Σ T_i α_i (d_i − z)` against the
//! surface depth `z`: it vanishes where nothing is rendered and, unlike a
//! plain difference of `D̂` values, it cannot be traded against opacity. Track predictions follow the compositing rule: the Gaussian centers at
//! `t′`, averaged with the compositing weights of the query pixel at the
//! query frame, projected with camera `t′`.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::{
    blend_motion, geom_backward, jacobian, motion_backward, Geom, Layout, SplatGrad, COLOR, LOGITS, MU,
    NEAR_PLANE, OPACITY, ROT, SCALE,
};
use super::quat;
use super::render::{alpha_grads, hits_at, pixel_center, prepare, splat_grad_from_alpha, Hit};
use super::{Camera, Gaussian3D, GaussianScene, MotionBasisSet, RigidTransform};
use crate::error::{Error, Result};
use crate::video::Frame;

/// A 2D track: where the surface under `query_pixel` at `query_frame` is seen
/// in every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track2D {
    pub query_frame: usize,
    pub query_pixel: [f64; 2],
    pub positions: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct FitInputs {
    pub frames: Vec<Frame>,
    /// Row-major surface depth maps (camera-frame depth of what each pixel
    /// sees), one per frame.
    pub depths: Vec<Vec<f64>>,
    pub tracks: Vec<Track2D>,
    pub cameras: Vec<Camera>,
}

impl FitInputs {
    fn validate(&self) -> Result<()> {
        let t = self.frames.len();
        if t < 2 {
            return Err(Error::InvalidArgument(format!(
                "fitting needs at least 2 frames, got {t}"
            )));
        }
        if self.depths.len() != t || self.cameras.len() != t {
            return Err(Error::DimensionMismatch(format!(
                "{t} frames, {} depth maps, {} cameras",
                self.depths.len(),
                self.cameras.len()
            )));
        }
        let (w, h) = self.frames[0].dims();
        for (f, (d, c)) in self.frames.iter().zip(self.depths.iter().zip(&self.cameras)) {
            if f.dims() != (w, h) || d.len() != w * h || (c.width, c.height) != (w, h) {
                return Err(Error::DimensionMismatch(
                    "frames, depth maps and cameras disagree on image size".into(),
                ));
            }
        }
        for tr in &self.tracks {
            if tr.query_frame >= t || tr.positions.len() != t {
                return Err(Error::DimensionMismatch(format!(
                    "track with query frame {} and {} positions for {t} frames",
                    tr.query_frame,
                    tr.positions.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub position: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub color: f64,
    pub motion: f64,
    pub basis_rotation: f64,
    pub basis_translation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 0.005,
            rotation: 0.01,
            scale: 0.01,
            opacity: 0.03,
            color: 0.01,
            motion: 0.01,
            basis_rotation: 0.002,
            basis_translation: 0.003,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub image: f64,
    pub depth: f64,
    /// Per pixel of track error.
    pub track: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            image: 1.0,
            depth: 0.5,
            track: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Iterations with the motion bases frozen.
    pub init_iterations: usize,
    /// Iterations over all parameters.
    pub joint_iterations: usize,
    /// Motion basis count for scenes built by [`initialize_from_video`].
    pub bases: usize,
    pub learning_rates: LearningRates,
    pub weights: LossWeights,
    /// Frames whose image and depth are left out of the loss (tracks stay).
    pub holdout: Vec<usize>,
    pub charbonnier_eps: f64,
    /// Step halvings tried before a step is rejected.
    pub backtracking: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            init_iterations: 1000,
            joint_iterations: 500,
            bases: 20,
            learning_rates: LearningRates::default(),
            weights: LossWeights::default(),
            holdout: Vec::new(),
            charbonnier_eps: 1e-3,
            backtracking: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub image: f64,
    pub depth: f64,
    pub track: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.image + self.depth + self.track
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_terms: LossTerms,
    /// Objective after every iteration (accepted value), starting with the
    /// initial objective.
    pub history: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

/// Residuals within a few ulps of their operands are rounding noise; zeroing
/// them keeps an exact fit an exact stationary point.
fn snap(r: f64, magnitude: f64) -> f64 {
    if r.abs() <= 8.0 * f64::EPSILON * magnitude.abs().max(1.0) {
        0.0
    } else {
        r
    }
}

fn charbonnier(r: f64, eps: f64) -> (f64, f64) {
    let s = (r * r + eps * eps).sqrt();
    (s - eps, r / s)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const LOGIT_LIMIT: f64 = 12.0;

fn layout_of(scene: &GaussianScene) -> Layout {
    Layout {
        gaussians: scene.gaussians().len(),
        bases: scene.bases().count(),
        timesteps: scene.timesteps(),
    }
}

/// Unconstrained parameter vector: log scales, opacity logits, raw
/// quaternions; everything else as is.
pub(crate) fn to_params(scene: &GaussianScene) -> Vec<f64> {
    let layout = layout_of(scene);
    let mut p = vec![0.0; layout.len()];
    for (i, g) in scene.gaussians().iter().enumerate() {
        let o = layout.gaussian(i);
        p[o + MU..o + MU + 3].copy_from_slice(&g.mu0);
        p[o + ROT..o + ROT + 4].copy_from_slice(&g.rotation);
        for k in 0..3 {
            p[o + SCALE + k] = g.scales[k].ln();
        }
        p[o + OPACITY] = logit(g.opacity).clamp(-LOGIT_LIMIT, LOGIT_LIMIT);
        p[o + COLOR..o + COLOR + 3].copy_from_slice(&g.color);
        p[o + LOGITS..o + LOGITS + layout.bases].copy_from_slice(&g.motion_logits);
    }
    for b in 0..layout.bases {
        for t in 0..layout.timesteps {
            let o = layout.basis(b, t);
            let bt = scene.bases().get(b, t);
            p[o..o + 4].copy_from_slice(&bt.rotation);
            p[o + 4..o + 7].copy_from_slice(&bt.translation);
        }
    }
    p
}

pub(crate) fn from_params(p: &[f64], template: &GaussianScene) -> Result<GaussianScene> {
    let layout = layout_of(template);
    let quat_at = |o: usize| -> quat::Quat { quat::normalize(&[p[o], p[o + 1], p[o + 2], p[o + 3]]) };
    let gaussians = (0..layout.gaussians)
        .map(|i| {
            let o = layout.gaussian(i);
            Gaussian3D {
                mu0: [p[o + MU], p[o + MU + 1], p[o + MU + 2]],
                rotation: quat_at(o + ROT),
                scales: [p[o + SCALE].exp(), p[o + SCALE + 1].exp(), p[o + SCALE + 2].exp()],
                opacity: sigmoid(p[o + OPACITY]),
                color: [p[o + COLOR], p[o + COLOR + 1], p[o + COLOR + 2]],
                motion_logits: p[o + LOGITS..o + LOGITS + layout.bases].to_vec(),
            }
        })
        .collect();
    let bases = (0..layout.bases)
        .map(|b| {
            (0..layout.timesteps)
                .map(|t| {
                    let o = layout.basis(b, t);
                    RigidTransform::new(
                        [p[o], p[o + 1], p[o + 2], p[o + 3]],
                        [p[o + 4], p[o + 5], p[o + 6]],
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianScene::new(
        gaussians,
        MotionBasisSet::new(bases)?,
        template.cameras().to_vec(),
        template.background(),
    )
}

/// Converts natural-parameter gradients (as produced by the backward pass)
/// into gradients of the unconstrained parameters.
fn chain_to_params(p: &[f64], scene: &GaussianScene, grad: &mut [f64]) {
    let layout = layout_of(scene);
    let raw = |o: usize| -> quat::Quat { [p[o], p[o + 1], p[o + 2], p[o + 3]] };
    let fix_quat = |grad: &mut [f64], o: usize| {
        let g = quat::normalize_grad(&raw(o), &[grad[o], grad[o + 1], grad[o + 2], grad[o + 3]]);
        grad[o..o + 4].copy_from_slice(&g);
    };
    for (i, g) in scene.gaussians().iter().enumerate() {
        let o = layout.gaussian(i);
        fix_quat(grad, o + ROT);
        for k in 0..3 {
            grad[o + SCALE + k] *= g.scales[k];
        }
        grad[o + OPACITY] *= g.opacity * (1.0 - g.opacity);
    }
    for b in 0..layout.bases {
        for t in 0..layout.timesteps {
            fix_quat(grad, layout.basis(b, t));
        }
    }
}

struct Eval {
    terms: LossTerms,
    grad: Vec<f64>,
}

/// Track prediction at every frame for one track, plus what the backward pass
/// needs.
struct TrackForward {
    hits: Vec<Hit>,
    total: f64,
    /// Per frame: composited world point, or `None` if it is behind camera.
    points: Vec<Option<Vector3<f64>>>,
}

fn track_forward(
    scene: &GaussianScene,
    splats: &[(usize, Geom)],
    query_pixel: [f64; 2],
) -> Option<TrackForward> {
    let mut hits = Vec::new();
    let q = Vector2::new(query_pixel[0], query_pixel[1]);
    hits_at(scene, splats, q, &mut hits);
    let total: f64 = hits.iter().map(Hit::weight).sum();
    if total < 1e-8 {
        return None;
    }
    let points = (0..scene.timesteps())
        .map(|t| {
            let mut f = Vector3::zeros();
            for h in &hits {
                let i = splats[h.k].0;
                let g = &scene.gaussians()[i];
                f += h.weight() * blend_motion(g, scene.bases(), t).apply(&Vector3::from(g.mu0));
            }
            let f = f / total;
            let pc = scene.cameras()[t].to_camera(&f);
            (pc.z > NEAR_PLANE).then_some(f)
        })
        .collect();
    Some(TrackForward { hits, total, points })
}

/// Pixel positions of a track under `scene`, using the same compositing rule
/// as the fitting loss. `None` where the query pixel is uncovered.
pub fn predict_track(
    scene: &GaussianScene,
    query_frame: usize,
    query_pixel: [f64; 2],
) -> Option<Vec<[f64; 2]>> {
    if query_frame >= scene.timesteps() {
        return None;
    }
    let fwd = track_forward(scene, &prepare(scene, query_frame), query_pixel)?;
    fwd.points
        .iter()
        .enumerate()
        .map(|(t, p)| p.map(|w| scene.cameras()[t].pixel_of(&scene.cameras()[t].to_camera(&w))))
        .collect()
}

fn evaluate(scene: &GaussianScene, inputs: &FitInputs, cfg: &FitConfig) -> Eval {
    let layout = layout_of(scene);
    let timesteps = scene.timesteps();
    let (w, h) = scene.image_dims();
    let eps = cfg.charbonnier_eps;
    let prepared: Vec<Vec<(usize, Geom)>> = (0..timesteps)
        .into_par_iter()
        .map(|t| prepare(scene, t))
        .collect();
    let train: Vec<usize> = (0..timesteps).filter(|t| !cfg.holdout.contains(t)).collect();
    let pixels = (w * h) as f64;
    let img_norm = cfg.weights.image / (pixels * 3.0 * train.len().max(1) as f64);
    let depth_norm = cfg.weights.depth / (pixels * train.len().max(1) as f64);
    let bg = Vector3::from(scene.background());

    // Photometric and depth terms, per frame.
    let per_frame: Vec<(f64, f64, Vec<SplatGrad>)> = (0..timesteps)
        .into_par_iter()
        .map(|t| {
            let splats = &prepared[t];
            let mut sgs = vec![SplatGrad::default(); splats.len()];
            if !train.contains(&t) {
                return (0.0, 0.0, sgs);
            }
            let target = inputs.frames[t].data();
            let target_depth = &inputs.depths[t];
            let (mut li, mut ld) = (0.0, 0.0);
            let mut hits = Vec::new();
            let mut g_w = Vec::new();
            let mut g_alpha = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    let t_final = hits_at(scene, splats, pixel_center(x, y), &mut hits);
                    let mut c = bg * t_final;
                    let mut d = 0.0;
                    for hit in &hits {
                        let (i, geo) = &splats[hit.k];
                        c += hit.weight() * Vector3::from(scene.gaussians()[*i].color);
                        d += hit.weight() * geo.pc.z;
                    }
                    let pix = y * w + x;
                    let mut g_c = Vector3::zeros();
                    for k in 0..3 {
                        let (v, dv) = charbonnier(c[k] - target[pix * 3 + k], eps);
                        li += v;
                        g_c[k] = img_norm * dv;
                    }
                    let coverage = 1.0 - t_final;
                    let z = target_depth[pix];
                    let (v, dv) = charbonnier(snap(d - coverage * z, d), eps);
                    ld += v;
                    let g_d = depth_norm * dv;
                    g_w.clear();
                    for hit in &hits {
                        let (i, geo) = &splats[hit.k];
                        let col = Vector3::from(scene.gaussians()[*i].color);
                        g_w.push(g_c.dot(&col) + g_d * (geo.pc.z - z));
                        let sg = &mut sgs[hit.k];
                        sg.color += hit.weight() * g_c;
                        sg.depth += hit.weight() * g_d;
                    }
                    alpha_grads(&hits, &g_w, g_c.dot(&bg), t_final, &mut g_alpha);
                    for (hit, &ga) in hits.iter().zip(&g_alpha) {
                        let (i, geo) = &splats[hit.k];
                        splat_grad_from_alpha(hit, ga, scene.gaussians()[*i].opacity, geo, &mut sgs[hit.k]);
                    }
                }
            }
            (li * img_norm, ld * depth_norm, sgs)
        })
        .collect();

    let mut terms = LossTerms::default();
    let mut splat_grads: Vec<Vec<SplatGrad>> = Vec::with_capacity(timesteps);
    for (li, ld, sgs) in per_frame {
        terms.image += li;
        terms.depth += ld;
        splat_grads.push(sgs);
    }

    // Track term.
    let mut grad = vec![0.0; layout.len()];
    if !inputs.tracks.is_empty() && cfg.weights.track > 0.0 {
        let track_norm = cfg.weights.track / (inputs.tracks.len() * timesteps) as f64;
        for track in &inputs.tracks {
            let splats = &prepared[track.query_frame];
            let Some(fwd) = track_forward(scene, splats, track.query_pixel) else {
                continue;
            };
            let mut g_w = vec![0.0; fwd.hits.len()];
            for (t, point) in fwd.points.iter().enumerate() {
                let Some(f) = point else { continue };
                let cam = &scene.cameras()[t];
                let pc = cam.to_camera(f);
                let u = cam.pixel_of(&pc);
                let mut g_u = Vector2::zeros();
                for k in 0..2 {
                    let (v, dv) = charbonnier(u[k] - track.positions[t][k], eps);
                    terms.track += track_norm * v;
                    g_u[k] = track_norm * dv;
                }
                let g_f = cam.extrinsic.matrix().transpose() * (jacobian(cam, &pc).transpose() * g_u);
                for (n, hit) in fwd.hits.iter().enumerate() {
                    let i = splats[hit.k].0;
                    let g = &scene.gaussians()[i];
                    let blend = blend_motion(g, scene.bases(), t);
                    let mu = blend.apply(&Vector3::from(g.mu0));
                    g_w[n] += g_f.dot(&(mu - f)) / fwd.total;
                    let g_mu = g_f * (hit.weight() / fwd.total);
                    motion_backward(
                        g,
                        scene.bases(),
                        t,
                        &blend,
                        &g_mu,
                        &Matrix3::zeros(),
                        &layout,
                        i,
                        &mut grad,
                    );
                }
            }
            let mut g_alpha = Vec::new();
            alpha_grads(&fwd.hits, &g_w, 0.0, 0.0, &mut g_alpha);
            for (hit, &ga) in fwd.hits.iter().zip(&g_alpha) {
                let (i, geo) = &splats[hit.k];
                splat_grad_from_alpha(
                    hit,
                    ga,
                    scene.gaussians()[*i].opacity,
                    geo,
                    &mut splat_grads[track.query_frame][hit.k],
                );
            }
        }
    }

    let partials: Vec<Vec<f64>> = (0..timesteps)
        .into_par_iter()
        .map(|t| {
            let mut g = vec![0.0; layout.len()];
            for ((i, geo), sg) in prepared[t].iter().zip(&splat_grads[t]) {
                geom_backward(
                    &scene.gaussians()[*i],
                    scene.bases(),
                    &scene.cameras()[t],
                    t,
                    geo,
                    sg,
                    &layout,
                    *i,
                    &mut g,
                );
            }
            g
        })
        .collect();
    for part in partials {
        for (a, b) in grad.iter_mut().zip(part) {
            *a += b;
        }
    }
    Eval { terms, grad }
}

/// Objective and its gradient with respect to the unconstrained parameter
/// vector of `scene` (the layout used by the optimizer).
pub fn loss_and_gradient(
    scene: &GaussianScene,
    inputs: &FitInputs,
    cfg: &FitConfig,
) -> Result<(f64, Vec<f64>)> {
    inputs.validate()?;
    let p = to_params(scene);
    let mut e = evaluate(scene, inputs, cfg);
    chain_to_params(&p, scene, &mut e.grad);
    Ok((e.terms.total(), e.grad))
}

/// Objective as a function of the unconstrained parameter vector.
pub fn loss_at(params: &[f64], template: &GaussianScene, inputs: &FitInputs, cfg: &FitConfig) -> Result<f64> {
    let scene = from_params(params, template)?;
    Ok(evaluate(&scene, inputs, cfg).terms.total())
}

/// Unconstrained parameter vector of `scene`.
pub fn scene_params(scene: &GaussianScene) -> Vec<f64> {
    to_params(scene)
}

fn step_sizes(layout: &Layout, lr: &LearningRates) -> Vec<f64> {
    let mut s = vec![0.0; layout.len()];
    for i in 0..layout.gaussians {
        let o = layout.gaussian(i);
        s[o + MU..o + MU + 3].fill(lr.position);
        s[o + ROT..o + ROT + 4].fill(lr.rotation);
        s[o + SCALE..o + SCALE + 3].fill(lr.scale);
        s[o + OPACITY] = lr.opacity;
        s[o + COLOR..o + COLOR + 3].fill(lr.color);
        s[o + LOGITS..o + LOGITS + layout.bases].fill(lr.motion);
    }
    for b in 0..layout.bases {
        for t in 0..layout.timesteps {
            let o = layout.basis(b, t);
            s[o..o + 4].fill(lr.basis_rotation);
            s[o + 4..o + 7].fill(lr.basis_translation);
        }
    }
    s
}

fn project_params(p: &mut [f64], layout: &Layout) {
    for i in 0..layout.gaussians {
        let o = layout.gaussian(i);
        for k in 0..3 {
            p[o + COLOR + k] = p[o + COLOR + k].clamp(0.0, 1.0);
            p[o + SCALE + k] = p[o + SCALE + k].clamp(-12.0, 6.0);
        }
        p[o + OPACITY] = p[o + OPACITY].clamp(-LOGIT_LIMIT, LOGIT_LIMIT);
    }
}

fn is_frozen(layout: &Layout, index: usize, bases_frozen: bool) -> bool {
    let first_basis = layout.basis(0, 0);
    if index < first_basis {
        return false;
    }
    // Basis transforms at t = 0 define the canonical frame.
    let t = ((index - first_basis) / 7) % layout.timesteps;
    bases_frozen || t == 0
}

/// Fits `init` to the inputs. The returned scene shares `init`'s cameras and
/// background and reproduces its Gaussian ordering.
pub fn fit_scene(
    inputs: &FitInputs,
    init: GaussianScene,
    cfg: &FitConfig,
) -> Result<(GaussianScene, FitReport)> {
    inputs.validate()?;
    if init.timesteps() != inputs.frames.len() || init.image_dims() != inputs.frames[0].dims() {
        return Err(Error::DimensionMismatch(
            "initial scene does not match the input frames".into(),
        ));
    }
    let layout = layout_of(&init);
    let template = init;
    let mut params = to_params(&template);
    let mut scene = template.clone();
    let mut cur = evaluate(&scene, inputs, cfg);
    let mut loss = cur.terms.total();
    if !loss.is_finite() {
        return Err(Error::Diverged {
            iteration: 0,
            detail: format!("initial objective is {loss}"),
        });
    }
    chain_to_params(&params, &scene, &mut cur.grad);
    let sizes = step_sizes(&layout, &cfg.learning_rates);
    let (beta1, beta2, adam_eps): (f64, f64, f64) = (0.9, 0.999, 1e-12);
    let mut report = FitReport {
        initial_loss: loss,
        final_loss: loss,
        final_terms: cur.terms,
        history: vec![loss],
        accepted: 0,
        rejected: 0,
    };
    let total_iters = cfg.init_iterations + cfg.joint_iterations;
    let mut m = vec![0.0; layout.len()];
    let mut v = vec![0.0; layout.len()];
    let mut adam_t = 0i32;
    let mut multiplier = 1.0f64;
    for iter in 0..total_iters {
        let bases_frozen = iter < cfg.init_iterations;
        if iter == cfg.init_iterations {
            m.fill(0.0);
            v.fill(0.0);
            adam_t = 0;
            multiplier = 1.0;
        }
        adam_t += 1;
        let bc1 = 1.0 - beta1.powi(adam_t);
        let bc2 = 1.0 - beta2.powi(adam_t);
        let mut step = vec![0.0; layout.len()];
        for j in 0..layout.len() {
            if is_frozen(&layout, j, bases_frozen) {
                continue;
            }
            let g = cur.grad[j];
            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
            step[j] = sizes[j] * (m[j] / bc1) / ((v[j] / bc2).sqrt() + adam_eps);
        }
        let mut accepted = None;
        let mut scale = multiplier;
        for _ in 0..=cfg.backtracking {
            let mut trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p - scale * s).collect();
            project_params(&mut trial, &layout);
            if let Ok(candidate) = from_params(&trial, &template) {
                let e = evaluate(&candidate, inputs, cfg);
                let l = e.terms.total();
                if l.is_finite() && l <= loss {
                    accepted = Some((trial, candidate, e, l));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((p, s, mut e, l)) => {
                chain_to_params(&p, &s, &mut e.grad);
                params = p;
                scene = s;
                cur = e;
                loss = l;
                report.accepted += 1;
                multiplier = (scale * 1.5).min(1.0);
            }
            None => {
                report.rejected += 1;
                multiplier = (multiplier * 0.25).max(1e-4);
            }
        }
        report.history.push(loss);
    }
    if !loss.is_finite() {
        return Err(Error::Diverged {
            iteration: total_iters,
            detail: format!("objective {loss}"),
        });
    }
    report.final_loss = loss;
    report.final_terms = cur.terms;
    Ok((scene, report))
}

/// A `grid × grid` sheet of Gaussians facing camera 0 at `depth`, colored
/// from the first frame. Motion logits and basis translations get small seeded
/// noise so the bases do not stay interchangeable under gradient descent.
pub fn initialize_from_video(
    frames: &[Frame],
    cameras: &[Camera],
    grid: usize,
    depth: f64,
    bases: usize,
    background: [f64; 3],
    seed: u64,
) -> Result<GaussianScene> {
    let first = frames.first().ok_or(Error::Empty("frames"))?;
    if grid == 0 || bases == 0 || !(depth > 0.0) {
        return Err(Error::InvalidArgument(
            "grid, bases and depth must be positive".into(),
        ));
    }
    let (w, h) = first.dims();
    let cam0 = cameras.first().ok_or(Error::Empty("cameras"))?;
    let to_world = cam0.extrinsic.inverse();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let spacing_px = (w.max(h) as f64) / grid as f64;
    let sigma = 0.6 * spacing_px * depth / cam0.fx();
    let mut gaussians = Vec::with_capacity(grid * grid);
    for gy in 0..grid {
        for gx in 0..grid {
            let px = ((gx as f64 + 0.5) * w as f64 / grid as f64).min(w as f64 - 0.5);
            let py = ((gy as f64 + 0.5) * h as f64 / grid as f64).min(h as f64 - 0.5);
            let world = to_world.apply(&cam0.unproject([px, py], depth));
            let color = first.pixel(px as usize, py as usize);
            gaussians.push(Gaussian3D {
                mu0: world.into(),
                rotation: quat::IDENTITY,
                scales: [sigma, sigma, 0.3 * sigma],
                opacity: 0.9,
                color,
                motion_logits: (0..bases).map(|_| noise.sample(&mut rng)).collect(),
            });
        }
    }
    let timesteps = frames.len();
    let basis_set = (0..bases)
        .map(|_| {
            (0..timesteps)
                .map(|t| {
                    if t == 0 {
                        RigidTransform::IDENTITY
                    } else {
                        RigidTransform::translation([
                            rng.random_range(-1e-3..1e-3),
                            rng.random_range(-1e-3..1e-3),
                            rng.random_range(-1e-3..1e-3),
                        ])
                    }
                })
                .collect()
        })
        .collect();
    GaussianScene::new(
        gaussians,
        MotionBasisSet::new(basis_set)?,
        cameras.to_vec(),
        background,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_gaussian_scene(bases: usize, timesteps: usize) -> GaussianScene {
        let cam = Camera::centered(40.0, 24, 20, RigidTransform::IDENTITY).unwrap();
        let mut cams = vec![cam; timesteps];
        // a slightly rotated, offset second camera exercises the extrinsic path
        if timesteps > 1 {
            cams[1] = Camera::new(
                [[42.0, 0.5, 12.3], [0.0, 39.0, 9.6], [0.0, 0.0, 1.0]],
                RigidTransform::new(quat::from_axis_angle([0.2, 1.0, 0.1], 0.05), [0.03, -0.02, 0.1])
                    .unwrap(),
                24,
                20,
            )
            .unwrap();
        }
        let g = |mu0: [f64; 3], axis: [f64; 3], color: [f64; 3], logits: Vec<f64>| Gaussian3D {
            mu0,
            rotation: quat::from_axis_angle(axis, 0.6),
            scales: [0.12, 0.08, 0.05],
            opacity: 0.7,
            color,
            motion_logits: logits,
        };
        let logits = |s: f64| (0..bases).map(|b| s * (b as f64 - 0.5)).collect::<Vec<_>>();
        let basis = |b: usize| {
            (0..timesteps)
                .map(|t| {
                    if t == 0 {
                        RigidTransform::IDENTITY
                    } else {
                        RigidTransform::new(
                            quat::from_axis_angle([0.1 * b as f64, 1.0, 0.3], 0.05 * (t + b) as f64),
                            [0.02 * t as f64, -0.01 * b as f64, 0.015],
                        )
                        .unwrap()
                    }
                })
                .collect()
        };
        GaussianScene::new(
            vec![
                g([-0.1, 0.05, 2.0], [1.0, 0.2, 0.0], [0.8, 0.3, 0.2], logits(0.7)),
                g([0.08, -0.03, 2.3], [0.0, 1.0, 0.5], [0.2, 0.5, 0.9], logits(-0.4)),
            ],
            MotionBasisSet::new((0..bases).map(basis).collect()).unwrap(),
            cams,
            [0.1, 0.1, 0.1],
        )
        .unwrap()
    }

    fn inputs_from(scene: &GaussianScene, tracks: Vec<Track2D>) -> FitInputs {
        let (frames, depths) = (0..scene.timesteps())
            .map(|t| {
                let r = super::super::render(scene, t).unwrap();
                let z = r.surface_depth(0.0);
                (r.image, z)
            })
            .unzip();
        FitInputs {
            frames,
            depths,
            tracks,
            cameras: scene.cameras().to_vec(),
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let truth = two_gaussian_scene(2, 2);
        let tracks = vec![Track2D {
            query_frame: 0,
            query_pixel: [10.5, 11.5],
            positions: vec![[10.0, 11.0], [11.0, 10.0]],
        }];
        let inputs = inputs_from(&truth, tracks);
        // evaluate away from the optimum
        let mut p = to_params(&truth);
        for (j, v) in p.iter_mut().enumerate() {
            *v += 0.01 * ((j * 7919 % 13) as f64 / 13.0 - 0.5);
        }
        let layout = layout_of(&truth);
        project_params(&mut p, &layout);
        let scene = from_params(&p, &truth).unwrap();
        let cfg = FitConfig {
            charbonnier_eps: 0.05,
            ..FitConfig::default()
        };
        let p = to_params(&scene);
        let (_, analytic) = loss_and_gradient(&scene, &inputs, &cfg).unwrap();
        let h = 1e-6;
        let mut fd = vec![0.0; p.len()];
        for j in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[j] += h;
            b[j] -= h;
            fd[j] = (loss_at(&a, &truth, &inputs, &cfg).unwrap()
                - loss_at(&b, &truth, &inputs, &cfg).unwrap())
                / (2.0 * h);
        }
        let diff: f64 = analytic
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 0.0);
        assert!(diff / norm < 1e-3, "relative gradient error {}", diff / norm);
    }

    #[test]
    fn ground_truth_is_a_fixed_point() {
        let truth = two_gaussian_scene(3, 3);
        let inputs = inputs_from(&truth, vec![]);
        let cfg = FitConfig {
            init_iterations: 2,
            joint_iterations: 2,
            ..FitConfig::default()
        };
        let (loss, grad) = loss_and_gradient(&truth, &inputs, &cfg).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
        let (fitted, report) = fit_scene(&inputs, truth.clone(), &cfg).unwrap();
        assert_eq!(report.final_loss, 0.0);
        assert_eq!(fitted, from_params(&to_params(&truth), &truth).unwrap());
    }

    #[test]
    fn objective_never_increases() {
        let truth = two_gaussian_scene(2, 3);
        let inputs = inputs_from(&truth, vec![]);
        let mut p = to_params(&truth);
        p[0] += 0.05;
        p[1] -= 0.04;
        let init = from_params(&p, &truth).unwrap();
        let cfg = FitConfig {
            init_iterations: 20,
            joint_iterations: 20,
            ..FitConfig::default()
        };
        let (_, report) = fit_scene(&inputs, init, &cfg).unwrap();
        assert!(report.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.final_loss < report.initial_loss);
        assert_eq!(report.history.len(), 41);
    }

    #[test]
    fn rejects_single_frame() {
        let truth = two_gaussian_scene(1, 1);
        let inputs = inputs_from(&truth, vec![]);
        assert!(fit_scene(&inputs, truth, &FitConfig::default()).is_err());
    }
}
