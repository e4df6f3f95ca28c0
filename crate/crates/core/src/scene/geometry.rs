//! Per-Gaussian geometry: motion blending, pinhole projection of means and
//! covariances, and the matching analytic backward pass.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::quat::{self, Quat};
use super::{Camera, Gaussian3D, MotionBasisSet};
use crate::error::{Error, Result};

/// Added to projected covariances before inversion, in px².
pub const COV2D_REGULARIZATION: f64 = 0.3;
/// Gaussians closer to the camera than this are culled by the renderer.
pub const NEAR_PLANE: f64 = 1e-3;

/// A Gaussian's blended motion at one timestep.
#[derive(Debug, Clone)]
pub struct Blend {
    pub weights: Vec<f64>,
    /// ±1 per basis, aligning each quaternion with the identity hemisphere.
    pub signs: Vec<f64>,
    pub qsum: Quat,
    pub q: Quat,
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
}

impl Blend {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.r * p + self.t
    }

    pub fn apply_to(&self, p: &[f64; 3]) -> [f64; 3] {
        self.apply(&Vector3::from(*p)).into()
    }
}

pub(crate) fn blend_motion(g: &Gaussian3D, bases: &MotionBasisSet, t: usize) -> Blend {
    let weights = g.motion_weights();
    let mut qsum = [0.0; 4];
    let mut tr = Vector3::zeros();
    let mut signs = Vec::with_capacity(weights.len());
    for (b, &w) in weights.iter().enumerate() {
        let bt = bases.get(b, t);
        let s = if bt.rotation[0] < 0.0 { -1.0 } else { 1.0 };
        signs.push(s);
        for (acc, r) in qsum.iter_mut().zip(&bt.rotation) {
            *acc += w * s * r;
        }
        tr += w * Vector3::from(bt.translation);
    }
    let q = quat::normalize(&qsum);
    Blend {
        weights,
        signs,
        qsum,
        q,
        r: quat::to_matrix(&q),
        t: tr,
    }
}

/// `(μ_t, R_t)`: `μ_t = R_{0→t} μ₀ + t_{0→t}` and `R_t = R_{0→t} R₀`, with the
/// per-Gaussian transform blended from the bases.
pub fn pose_at_time(
    g: &Gaussian3D,
    bases: &MotionBasisSet,
    t: usize,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    if t >= bases.timesteps() {
        return Err(Error::TimeOutOfRange {
            t,
            timesteps: bases.timesteps(),
        });
    }
    if g.motion_logits.len() != bases.count() {
        return Err(Error::DimensionMismatch(format!(
            "{} motion coefficients for {} bases",
            g.motion_logits.len(),
            bases.count()
        )));
    }
    let b = blend_motion(g, bases, t);
    Ok((b.apply(&Vector3::from(g.mu0)), b.r * quat::to_matrix(&g.rotation)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// Pixel coordinates.
    pub mean: [f64; 2],
    /// `J E Σ Eᵀ Jᵀ` in px², without regularization.
    pub cov: [[f64; 2]; 2],
    /// Camera-frame depth.
    pub depth: f64,
}

pub(crate) fn jacobian(cam: &Camera, pc: &Vector3<f64>) -> Matrix2x3<f64> {
    let (x, y, z) = (pc.x, pc.y, pc.z);
    let (fx, fy, s) = (cam.fx(), cam.fy(), cam.skew());
    Matrix2x3::new(
        fx / z,
        s / z,
        -(fx * x + s * y) / (z * z),
        0.0,
        fy / z,
        -fy * y / (z * z),
    )
}

/// Projects a world-space mean and covariance through `cam`.
pub fn project(mu: &Vector3<f64>, sigma: &Matrix3<f64>, cam: &Camera) -> Result<Projection> {
    let pc = cam.to_camera(mu);
    if !(pc.z > 0.0) {
        return Err(Error::BehindCamera { depth: pc.z });
    }
    let m = jacobian(cam, &pc) * cam.extrinsic.matrix();
    let c = m * sigma * m.transpose();
    Ok(Projection {
        mean: cam.pixel_of(&pc),
        cov: [[c[(0, 0)], c[(0, 1)]], [c[(1, 0)], c[(1, 1)]]],
        depth: pc.z,
    })
}

/// Forward intermediates of one Gaussian at one timestep.
#[derive(Debug, Clone)]
pub(crate) struct Geom {
    pub blend: Blend,
    pub r0: Matrix3<f64>,
    pub rt: Matrix3<f64>,
    pub s2: Vector3<f64>,
    pub sigma: Matrix3<f64>,
    pub pc: Vector3<f64>,
    pub j: Matrix2x3<f64>,
    pub m: Matrix2x3<f64>,
    pub conic: Matrix2<f64>,
    pub mean: Vector2<f64>,
    /// Radius (px) beyond which the splat's falloff is negligible.
    pub radius: f64,
}

/// `None` when the Gaussian is culled (behind the near plane or degenerate).
pub(crate) fn geom_forward(g: &Gaussian3D, bases: &MotionBasisSet, cam: &Camera, t: usize) -> Option<Geom> {
    let blend = blend_motion(g, bases, t);
    let r0 = quat::to_matrix(&g.rotation);
    let rt = blend.r * r0;
    let s = Vector3::from(g.scales);
    let s2 = s.component_mul(&s);
    let sigma = rt * Matrix3::from_diagonal(&s2) * rt.transpose();
    let mu_t = blend.apply(&Vector3::from(g.mu0));
    let pc = cam.to_camera(&mu_t);
    if !(pc.z > NEAR_PLANE) {
        return None;
    }
    let j = jacobian(cam, &pc);
    let m = j * cam.extrinsic.matrix();
    let sigma2 = m * sigma * m.transpose() + Matrix2::identity() * COV2D_REGULARIZATION;
    let conic = sigma2.try_inverse()?;
    let p = cam.pixel_of(&pc);
    let tr = sigma2.trace();
    let det = sigma2.determinant();
    let lambda = 0.5 * tr + (0.25 * tr * tr - det).max(0.0).sqrt();
    Some(Geom {
        blend,
        r0,
        rt,
        s2,
        sigma,
        pc,
        j,
        m,
        conic,
        mean: Vector2::new(p[0], p[1]),
        radius: 7.5 * lambda.sqrt(),
    })
}

/// Loss gradients collected on one projected splat.
#[derive(Debug, Clone, Default)]
pub(crate) struct SplatGrad {
    pub mean: Vector2<f64>,
    pub conic: Matrix2<f64>,
    pub opacity: f64,
    pub color: Vector3<f64>,
    pub depth: f64,
    /// Direct gradient on the world-space center `μ_t`.
    pub mu_t: Vector3<f64>,
}

/// Flat parameter layout shared by gradients and the optimizer.
///
/// Per Gaussian: `mu0[3] rotation[4] scales[3] opacity color[3] logits[B]`;
/// then per basis and timestep: `rotation[4] translation[3]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub gaussians: usize,
    pub bases: usize,
    pub timesteps: usize,
}

pub(crate) const MU: usize = 0;
pub(crate) const ROT: usize = 3;
pub(crate) const SCALE: usize = 7;
pub(crate) const OPACITY: usize = 10;
pub(crate) const COLOR: usize = 11;
pub(crate) const LOGITS: usize = 14;

impl Layout {
    pub fn per_gaussian(&self) -> usize {
        LOGITS + self.bases
    }

    pub fn gaussian(&self, i: usize) -> usize {
        i * self.per_gaussian()
    }

    pub fn basis(&self, b: usize, t: usize) -> usize {
        self.gaussians * self.per_gaussian() + (b * self.timesteps + t) * 7
    }

    pub fn len(&self) -> usize {
        self.basis(self.bases, 0)
    }
}

/// Accumulates into `grad` the gradient of the natural scene parameters
/// (unit quaternions, scales, opacity, color, logits, basis quaternions and
/// translations) given the splat-level gradient `sg`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn geom_backward(
    g: &Gaussian3D,
    bases: &MotionBasisSet,
    cam: &Camera,
    t: usize,
    geo: &Geom,
    sg: &SplatGrad,
    layout: &Layout,
    i: usize,
    grad: &mut [f64],
) {
    let re = cam.extrinsic.matrix();
    // conic = Σ2⁻¹
    let g_sigma2 = -(geo.conic.transpose() * sg.conic * geo.conic.transpose());
    let g_m = (g_sigma2 + g_sigma2.transpose()) * geo.m * geo.sigma;
    let g_sigma = geo.m.transpose() * g_sigma2 * geo.m;
    let g_j = g_m * re.transpose();

    let (x, y, z) = (geo.pc.x, geo.pc.y, geo.pc.z);
    let (fx, fy, s) = (cam.fx(), cam.fy(), cam.skew());
    let mut g_pc = geo.j.transpose() * sg.mean;
    g_pc.z += sg.depth;
    let z2 = z * z;
    let z3 = z2 * z;
    g_pc.x += g_j[(0, 2)] * (-fx / z2);
    g_pc.y += g_j[(0, 2)] * (-s / z2) + g_j[(1, 2)] * (-fy / z2);
    g_pc.z += g_j[(0, 0)] * (-fx / z2)
        + g_j[(0, 1)] * (-s / z2)
        + g_j[(0, 2)] * (2.0 * (fx * x + s * y) / z3)
        + g_j[(1, 1)] * (-fy / z2)
        + g_j[(1, 2)] * (2.0 * fy * y / z3);

    let g_mu_t = re.transpose() * g_pc + sg.mu_t;

    let d = Matrix3::from_diagonal(&geo.s2);
    let g_rt = (g_sigma + g_sigma.transpose()) * geo.rt * d;
    let inner = geo.rt.transpose() * g_sigma * geo.rt;

    let g_r0 = geo.blend.r.transpose() * g_rt;
    let base = layout.gaussian(i);
    for k in 0..3 {
        grad[base + SCALE + k] += inner[(k, k)] * 2.0 * g.scales[k];
        grad[base + COLOR + k] += sg.color[k];
    }
    let g_q0 = quat::matrix_grad(&g.rotation, &g_r0);
    for k in 0..4 {
        grad[base + ROT + k] += g_q0[k];
    }
    grad[base + OPACITY] += sg.opacity;
    motion_backward(
        g,
        bases,
        t,
        &geo.blend,
        &g_mu_t,
        &(g_rt * geo.r0.transpose()),
        layout,
        i,
        grad,
    );
}

/// Backpropagates through `μ_t = R_blend μ₀ + t_blend` and the basis blend,
/// with `g_r_extra` an additional gradient on `R_blend`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn motion_backward(
    g: &Gaussian3D,
    bases: &MotionBasisSet,
    t: usize,
    blend: &Blend,
    g_mu_t: &Vector3<f64>,
    g_r_extra: &Matrix3<f64>,
    layout: &Layout,
    i: usize,
    grad: &mut [f64],
) {
    let mu0 = Vector3::from(g.mu0);
    let g_rm = g_r_extra + g_mu_t * mu0.transpose();
    let g_mu0 = blend.r.transpose() * g_mu_t;
    let g_trm = g_mu_t;

    let base = layout.gaussian(i);
    for k in 0..3 {
        grad[base + MU + k] += g_mu0[k];
    }
    let g_qhat = quat::matrix_grad(&blend.q, &g_rm);
    let g_qsum = quat::normalize_grad(&blend.qsum, &g_qhat);
    let w = &blend.weights;
    let mut g_w = vec![0.0; w.len()];
    for b in 0..w.len() {
        let bt = bases.get(b, t);
        let sgn = blend.signs[b];
        let off = layout.basis(b, t);
        for k in 0..4 {
            grad[off + k] += w[b] * sgn * g_qsum[k];
        }
        for k in 0..3 {
            grad[off + 4 + k] += w[b] * g_trm[k];
        }
        g_w[b] = sgn * quat::dot(&bt.rotation, &g_qsum) + Vector3::from(bt.translation).dot(g_trm);
    }
    let mean_gw: f64 = w.iter().zip(&g_w).map(|(a, b)| a * b).sum();
    for b in 0..w.len() {
        grad[base + LOGITS + b] += w[b] * (g_w[b] - mean_gw);
    }
}
