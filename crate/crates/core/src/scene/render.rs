//! Front-to-back alpha compositing of projected Gaussians.
//!
//! `Î(p) = Σ T_i α_i c_i + T_N · background`, `D̂(p) = Σ T_i α_i d_i` with
//! `α_i = o_i exp(−½ (p − μ′_i)ᵀ Σ′_i⁻¹ (p − μ′_i))` and
//! `T_i = Π_{j<i} (1 − α_j)`; `d_i` is the camera-frame depth of the center.
//! Pixels nothing covers get depth 0.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::geometry::{blend_motion, geom_forward, Geom, SplatGrad};
use super::GaussianScene;
use crate::error::{Error, Result};
use crate::video::Frame;

/// Upper bound on a single splat's alpha.
pub const ALPHA_MAX: f64 = 0.999;
// exp(-28) ≈ 7e-13: contributions below this are dropped.
const MIN_EXPONENT: f64 = -28.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rendered {
    pub image: Frame,
    /// Row-major `D̂`.
    pub depth: Vec<f64>,
    /// Accumulated opacity `1 − T_N` per pixel.
    pub opacity: Vec<f64>,
}

impl Rendered {
    /// `D̂ / (1 − T_N)`: depth of the visible surface, 0 where coverage is
    /// not above `min_coverage`.
    pub fn surface_depth(&self, min_coverage: f64) -> Vec<f64> {
        self.depth
            .iter()
            .zip(&self.opacity)
            .map(|(&d, &a)| if a > min_coverage { d / a } else { 0.0 })
            .collect()
    }
}

/// Splats visible at `t`, front to back (ties broken by Gaussian index).
pub(crate) fn prepare(scene: &GaussianScene, t: usize) -> Vec<(usize, Geom)> {
    let cam = &scene.cameras()[t];
    let mut splats: Vec<(usize, Geom)> = scene
        .gaussians()
        .iter()
        .enumerate()
        .filter_map(|(i, g)| geom_forward(g, scene.bases(), cam, t).map(|geo| (i, geo)))
        .collect();
    splats.sort_by(|a, b| a.1.pc.z.total_cmp(&b.1.pc.z).then(a.0.cmp(&b.0)));
    splats
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Hit {
    /// Position in the sorted splat list.
    pub k: usize,
    pub alpha: f64,
    /// Transmittance in front of this splat.
    pub trans: f64,
    pub falloff: f64,
    pub clamped: bool,
    pub offset: Vector2<f64>,
}

impl Hit {
    pub fn weight(&self) -> f64 {
        self.trans * self.alpha
    }
}

/// Fills `hits` for pixel position `p` and returns the final transmittance.
pub(crate) fn hits_at(
    scene: &GaussianScene,
    splats: &[(usize, Geom)],
    p: Vector2<f64>,
    hits: &mut Vec<Hit>,
) -> f64 {
    hits.clear();
    let mut trans = 1.0;
    for (k, (i, geo)) in splats.iter().enumerate() {
        let d = p - geo.mean;
        if d.x.abs() > geo.radius || d.y.abs() > geo.radius {
            continue;
        }
        let power = -0.5 * (d.transpose() * geo.conic * d)[(0, 0)];
        if power < MIN_EXPONENT {
            continue;
        }
        let falloff = power.exp();
        let raw = scene.gaussians()[*i].opacity * falloff;
        let clamped = raw > ALPHA_MAX;
        let alpha = raw.min(ALPHA_MAX);
        hits.push(Hit {
            k,
            alpha,
            trans,
            falloff,
            clamped,
            offset: d,
        });
        trans *= 1.0 - alpha;
    }
    trans
}

/// `dL/dα_k` from `dL/dw_k` (weights `w_k = T_k α_k`) and `dL/dT_N`.
pub(crate) fn alpha_grads(hits: &[Hit], g_w: &[f64], g_final: f64, t_final: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize(hits.len(), 0.0);
    let mut behind = g_final * t_final;
    for n in (0..hits.len()).rev() {
        let h = &hits[n];
        out[n] = h.trans * g_w[n] - behind / (1.0 - h.alpha);
        behind += g_w[n] * h.weight();
    }
}

/// Pushes `dL/dα` of one hit onto its splat's opacity, mean and conic.
pub(crate) fn splat_grad_from_alpha(hit: &Hit, g_alpha: f64, opacity: f64, geo: &Geom, sg: &mut SplatGrad) {
    if hit.clamped || g_alpha == 0.0 {
        return;
    }
    sg.opacity += g_alpha * hit.falloff;
    let g_power = g_alpha * opacity * hit.falloff;
    let d = hit.offset;
    sg.mean += g_power * (geo.conic * d);
    sg.conic += -0.5 * g_power * (d * d.transpose());
}

pub(crate) fn pixel_center(x: usize, y: usize) -> Vector2<f64> {
    Vector2::new(x as f64 + 0.5, y as f64 + 0.5)
}

/// Renders image, depth and accumulated opacity at timestep `t`.
pub fn render(scene: &GaussianScene, t: usize) -> Result<Rendered> {
    if t >= scene.timesteps() {
        return Err(Error::TimeOutOfRange {
            t,
            timesteps: scene.timesteps(),
        });
    }
    let (w, h) = scene.image_dims();
    let splats = prepare(scene, t);
    let bg = scene.background();
    let mut rgb = Vec::with_capacity(w * h * 3);
    let mut depth = Vec::with_capacity(w * h);
    let mut opacity = Vec::with_capacity(w * h);
    let mut hits = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let t_final = hits_at(scene, &splats, pixel_center(x, y), &mut hits);
            let mut c = Vector3::from(bg) * t_final;
            let mut d = 0.0;
            for hit in &hits {
                let (i, geo) = &splats[hit.k];
                let wgt = hit.weight();
                c += wgt * Vector3::from(scene.gaussians()[*i].color);
                d += wgt * geo.pc.z;
            }
            rgb.extend_from_slice(c.as_slice());
            depth.push(d);
            opacity.push(1.0 - t_final);
        }
    }
    Ok(Rendered {
        image: Frame::from_clamped(w, h, rgb)?,
        depth,
        opacity,
    })
}

/// Where the surface seen at pixel `p` at time `t` appears at time `t′`, and
/// its depth there.
///
/// The surface point is the pixel ray at the opacity-normalized rendered
/// depth. It is carried from `t` to `t′` by every contributing Gaussian's own
/// blended motion, averaged with the compositing weights, and projected with
/// camera `t′`.
pub fn track_correspondence(
    scene: &GaussianScene,
    p: [f64; 2],
    t: usize,
    t_prime: usize,
) -> Result<([f64; 2], f64)> {
    for &s in &[t, t_prime] {
        if s >= scene.timesteps() {
            return Err(Error::TimeOutOfRange {
                t: s,
                timesteps: scene.timesteps(),
            });
        }
    }
    let splats = prepare(scene, t);
    let mut hits = Vec::new();
    hits_at(scene, &splats, Vector2::new(p[0], p[1]), &mut hits);
    let total: f64 = hits.iter().map(Hit::weight).sum();
    if total < 1e-6 {
        return Err(Error::NoCoverage { x: p[0], y: p[1], t });
    }
    let depth = hits.iter().map(|h| h.weight() * splats[h.k].1.pc.z).sum::<f64>() / total;
    let cam_t = &scene.cameras()[t];
    let world = cam_t.extrinsic.inverse().apply(&cam_t.unproject(p, depth));
    let mut moved = Vector3::zeros();
    for h in &hits {
        let (i, geo) = &splats[h.k];
        let g = &scene.gaussians()[*i];
        let to = blend_motion(g, scene.bases(), t_prime);
        let canonical = geo.blend.r.transpose() * (world - geo.blend.t);
        moved += (h.weight() / total) * to.apply(&canonical);
    }
    let cam = &scene.cameras()[t_prime];
    let pc = cam.to_camera(&moved);
    if !(pc.z > 0.0) {
        return Err(Error::BehindCamera { depth: pc.z });
    }
    Ok((cam.pixel_of(&pc), pc.z))
}

#[cfg(test)]
mod tests {
    use super::super::{quat, Camera, Gaussian3D, MotionBasisSet, RigidTransform};
    use super::*;

    fn gaussian(mu0: [f64; 3], scale: f64, opacity: f64, color: [f64; 3]) -> Gaussian3D {
        Gaussian3D {
            mu0,
            rotation: quat::IDENTITY,
            scales: [scale; 3],
            opacity,
            color,
            motion_logits: vec![0.0],
        }
    }

    fn scene(gaussians: Vec<Gaussian3D>, timesteps: usize) -> GaussianScene {
        let cam = Camera::centered(60.0, 40, 30, RigidTransform::IDENTITY).unwrap();
        GaussianScene::new(
            gaussians,
            MotionBasisSet::identity(1, timesteps).unwrap(),
            vec![cam; timesteps],
            [0.1, 0.2, 0.3],
        )
        .unwrap()
    }

    #[test]
    fn empty_scene_is_background() {
        let r = render(&scene(vec![], 1), 0).unwrap();
        assert!(r.image.data().chunks(3).all(|p| p == [0.1, 0.2, 0.3]));
        assert!(r.depth.iter().all(|&d| d == 0.0));
        assert!(render(&scene(vec![], 1), 1).is_err());
    }

    #[test]
    fn single_gaussian_peaks_at_its_projection() {
        let s = scene(vec![gaussian([0.1, -0.05, 3.0], 0.08, 0.9, [1.0, 1.0, 1.0])], 1);
        let r = render(&s, 0).unwrap();
        let (mut best, mut at) = (f64::MIN, (0, 0));
        for y in 0..30 {
            for x in 0..40 {
                let v = r.image.pixel(x, y).iter().sum::<f64>();
                if v > best {
                    best = v;
                    at = (x, y);
                }
            }
        }
        let cam = &s.cameras()[0];
        let p = cam.pixel_of(&cam.to_camera(&Vector3::new(0.1, -0.05, 3.0)));
        assert!((at.0 as f64 + 0.5 - p[0]).abs() <= 1.0);
        assert!((at.1 as f64 + 0.5 - p[1]).abs() <= 1.0);
    }

    #[test]
    fn opaque_front_gaussian_occludes() {
        // centered on pixel (20, 15)
        let c = 1.0 / 60.0;
        let front = gaussian([c, c, 2.0], 0.2, 0.999_999, [0.9, 0.1, 0.1]);
        let back = gaussian([0.0, 0.0, 4.0], 0.4, 0.9, [0.1, 0.1, 0.9]);
        let r = render(&scene(vec![back, front], 1), 0).unwrap();
        let px = r.image.pixel(20, 15);
        for (a, b) in px.iter().zip([0.9, 0.1, 0.1]) {
            assert!((a - b).abs() < 2e-3, "{px:?}");
        }
    }

    #[test]
    fn transmittance_and_color_bounds() {
        let s = scene(
            vec![
                gaussian([0.0, 0.0, 3.0], 0.3, 0.8, [0.9, 0.5, 0.2]),
                gaussian([0.2, 0.1, 2.5], 0.2, 0.6, [0.3, 0.6, 0.7]),
            ],
            1,
        );
        let r = render(&s, 0).unwrap();
        assert!(r.opacity.iter().all(|&o| (0.0..=1.0).contains(&o)));

        let single = scene(vec![gaussian([0.0, 0.0, 3.0], 0.3, 0.8, [0.9, 0.5, 0.2])], 1);
        let r = render(&single, 0).unwrap();
        for (px, &o) in r.image.data().chunks(3).zip(&r.opacity) {
            for (k, &v) in px.iter().enumerate() {
                let c = [0.9, 0.5, 0.2][k];
                let bg = [0.1, 0.2, 0.3][k];
                assert!((v - (o * c + (1.0 - o) * bg)).abs() < 1e-12);
                assert!(v <= c.max(bg) + 1e-12);
            }
        }
    }

    #[test]
    fn static_tracks_are_identity() {
        let s = scene(vec![gaussian([0.0, 0.0, 3.0], 0.3, 0.9, [0.5; 3])], 3);
        let (u, d) = track_correspondence(&s, [20.5, 15.5], 0, 2).unwrap();
        assert!((u[0] - 20.5).abs() < 1e-9 && (u[1] - 15.5).abs() < 1e-9);
        assert!((d - 3.0).abs() < 1e-9);
        let (u, _) = track_correspondence(&s, [18.5, 12.5], 1, 1).unwrap();
        assert!((u[0] - 18.5).abs() < 1e-9 && (u[1] - 12.5).abs() < 1e-9);
        let small = scene(vec![gaussian([0.0, 0.0, 3.0], 0.05, 0.9, [0.5; 3])], 3);
        assert!(matches!(
            track_correspondence(&small, [0.5, 0.5], 0, 1),
            Err(Error::NoCoverage { .. })
        ));
    }

    #[test]
    fn translated_scene_shifts_tracks() {
        let delta = 0.1;
        let cam = Camera::centered(60.0, 40, 30, RigidTransform::IDENTITY).unwrap();
        let mut g = gaussian([0.0, 0.0, 3.0], 0.3, 0.9, [0.5; 3]);
        g.motion_logits = vec![0.0];
        let s = GaussianScene::new(
            vec![g],
            MotionBasisSet::new(vec![vec![
                RigidTransform::IDENTITY,
                RigidTransform::translation([delta, 0.0, 0.0]),
            ]])
            .unwrap(),
            vec![cam; 2],
            [0.0; 3],
        )
        .unwrap();
        let p = [20.5, 15.5];
        let (u, d) = track_correspondence(&s, p, 0, 1).unwrap();
        assert!((u[0] - (p[0] + 60.0 * delta / d)).abs() < 1e-9);
        assert!((u[1] - p[1]).abs() < 1e-9);
    }
}
