//! Dynamic scene reconstruction with persistent 3D Gaussians.
//!
//! Every Gaussian lives in a canonical frame (time 0) and moves by a blend of
//! shared rigid motion bases: the blend weights are the softmax of the
//! Gaussian's motion logits, rotations are blended as a renormalized weighted
//! quaternion average and translations linearly. Rendering projects each
//! Gaussian through a pinhole camera and alpha-composites front to back.
//!
//! Scene files are JSON; see [`GaussianScene`] for the schema.

pub mod fit;
pub mod geometry;
pub mod quat;
pub mod render;
pub mod synthetic;

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use quat::Quat;

pub use fit::{fit_scene, initialize_from_video, FitConfig, FitInputs, FitReport, Track2D};
pub use geometry::{pose_at_time, project, Projection};
pub use render::{render, track_correspondence, Rendered};

/// Unit-norm tolerance for stored quaternions.
const UNIT_TOLERANCE: f64 = 1e-9;

/// `x ↦ R x + t` with `R` given as a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Quat,
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: quat::IDENTITY,
        translation: [0.0; 3],
    };

    /// Normalizes the rotation; fails on a (near) zero quaternion.
    pub fn new(rotation: Quat, translation: [f64; 3]) -> Result<Self> {
        let n = quat::norm(&rotation);
        if !(n > 1e-12 && n.is_finite()) || translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid rigid transform {rotation:?} / {translation:?}"
            )));
        }
        Ok(Self {
            rotation: quat::normalize(&rotation),
            translation,
        })
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self {
            rotation: quat::IDENTITY,
            translation: t,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        quat::to_matrix(&self.rotation)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.matrix() * p + Vector3::from(self.translation)
    }

    pub fn inverse(&self) -> Self {
        let r = quat::conj(&self.rotation);
        let t = -(quat::to_matrix(&r) * Vector3::from(self.translation));
        Self {
            rotation: r,
            translation: t.into(),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        let t = self.apply(&Vector3::from(other.translation));
        Self {
            rotation: quat::normalize(&quat::mul(&self.rotation, &other.rotation)),
            translation: t.into(),
        }
    }

    fn is_unit(&self) -> bool {
        (quat::norm(&self.rotation) - 1.0).abs() <= UNIT_TOLERANCE * 10.0
    }
}

/// `bases[b][t]` maps canonical coordinates to time `t` for basis `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionBasisSet {
    bases: Vec<Vec<RigidTransform>>,
}

impl MotionBasisSet {
    pub fn new(bases: Vec<Vec<RigidTransform>>) -> Result<Self> {
        let t = bases.first().map(Vec::len).ok_or(Error::Empty("motion bases"))?;
        if t == 0 {
            return Err(Error::Empty("motion basis timesteps"));
        }
        for b in &bases {
            if b.len() != t {
                return Err(Error::DimensionMismatch(format!(
                    "motion bases cover {} and {t} timesteps",
                    b.len()
                )));
            }
            if let Some(bad) = b.iter().find(|tr| !tr.is_unit()) {
                return Err(Error::InvalidArgument(format!(
                    "basis rotation {:?} is not unit norm",
                    bad.rotation
                )));
            }
        }
        Ok(Self { bases })
    }

    /// `count` bases that are the identity at every timestep.
    pub fn identity(count: usize, timesteps: usize) -> Result<Self> {
        Self::new(vec![vec![RigidTransform::IDENTITY; timesteps]; count])
    }

    pub fn count(&self) -> usize {
        self.bases.len()
    }

    pub fn timesteps(&self) -> usize {
        self.bases[0].len()
    }

    pub fn get(&self, basis: usize, t: usize) -> &RigidTransform {
        &self.bases[basis][t]
    }

    pub fn bases(&self) -> &[Vec<RigidTransform>] {
        &self.bases
    }
}

/// Pinhole camera: `K` (upper triangular, positive focal lengths) and the
/// world-to-camera transform `E`. Pixel `(x, y)` has its center at
/// `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: [[f64; 3]; 3],
    pub extrinsic: RigidTransform,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        intrinsics: [[f64; 3]; 3],
        extrinsic: RigidTransform,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let k = intrinsics;
        let upper = k[1][0] == 0.0 && k[2][0] == 0.0 && k[2][1] == 0.0 && k[2][2] == 1.0;
        if !upper || !(k[0][0] > 0.0 && k[1][1] > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "intrinsics must be upper triangular with positive focal lengths and K[2][2] = 1, got {k:?}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("camera image must be non-empty".into()));
        }
        if !extrinsic.is_unit() {
            return Err(Error::InvalidArgument("camera rotation is not unit norm".into()));
        }
        Ok(Self {
            intrinsics,
            extrinsic,
            width,
            height,
        })
    }

    /// Square pixels, no skew, principal point at the image center.
    pub fn centered(focal: f64, width: usize, height: usize, extrinsic: RigidTransform) -> Result<Self> {
        Self::new(
            [
                [focal, 0.0, width as f64 / 2.0],
                [0.0, focal, height as f64 / 2.0],
                [0.0, 0.0, 1.0],
            ],
            extrinsic,
            width,
            height,
        )
    }

    pub fn fx(&self) -> f64 {
        self.intrinsics[0][0]
    }

    pub fn fy(&self) -> f64 {
        self.intrinsics[1][1]
    }

    pub fn skew(&self) -> f64 {
        self.intrinsics[0][1]
    }

    pub fn cx(&self) -> f64 {
        self.intrinsics[0][2]
    }

    pub fn cy(&self) -> f64 {
        self.intrinsics[1][2]
    }

    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.extrinsic.apply(world)
    }

    /// Pixel coordinates of a camera-frame point (no depth check).
    pub fn pixel_of(&self, pc: &Vector3<f64>) -> [f64; 2] {
        [
            (self.fx() * pc.x + self.skew() * pc.y) / pc.z + self.cx(),
            self.fy() * pc.y / pc.z + self.cy(),
        ]
    }

    /// Camera-frame point at depth `z` seen through pixel coordinates `p`.
    pub fn unproject(&self, p: [f64; 2], z: f64) -> Vector3<f64> {
        let y = (p[1] - self.cy()) / self.fy();
        let x = (p[0] - self.cx() - self.skew() * y) / self.fx();
        Vector3::new(x * z, y * z, z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian3D {
    pub mu0: [f64; 3],
    /// Canonical orientation, unit quaternion `[w, x, y, z]`.
    pub rotation: Quat,
    pub scales: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    /// Unnormalized motion coefficients; blend weights are their softmax.
    pub motion_logits: Vec<f64>,
}

impl Gaussian3D {
    pub fn validate(&self) -> Result<()> {
        if (quat::norm(&self.rotation) - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "Gaussian rotation {:?} is not unit norm",
                self.rotation
            )));
        }
        if self.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "scales {:?} must be positive",
                self.scales
            )));
        }
        if !(self.opacity > 0.0 && self.opacity < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "opacity {} outside (0, 1)",
                self.opacity
            )));
        }
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidArgument(format!(
                "color {:?} outside [0, 1]",
                self.color
            )));
        }
        if self.mu0.iter().chain(&self.motion_logits).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite Gaussian parameter".into()));
        }
        Ok(())
    }

    /// Softmax of the motion logits.
    pub fn motion_weights(&self) -> Vec<f64> {
        softmax(&self.motion_logits)
    }

    /// `Σ₀ = R₀ diag(s²) R₀ᵀ`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = quat::to_matrix(&self.rotation);
        let s2 = Vector3::from(self.scales).component_mul(&Vector3::from(self.scales));
        r * Matrix3::from_diagonal(&s2) * r.transpose()
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// JSON schema:
///
/// ```text
/// {
///   "gaussians":  [{ "mu0": [x,y,z], "rotation": [w,x,y,z], "scales": [sx,sy,sz],
///                    "opacity": o, "color": [r,g,b], "motion_logits": [B values] }],
///   "bases":      { "bases": [[{ "rotation": [w,x,y,z], "translation": [x,y,z] }; T]; B] },
///   "cameras":    [{ "intrinsics": [[3];3], "extrinsic": {...}, "width": W, "height": H }; T],
///   "background": [r,g,b]
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianScene {
    gaussians: Vec<Gaussian3D>,
    bases: MotionBasisSet,
    cameras: Vec<Camera>,
    background: [f64; 3],
}

impl GaussianScene {
    pub fn new(
        gaussians: Vec<Gaussian3D>,
        bases: MotionBasisSet,
        cameras: Vec<Camera>,
        background: [f64; 3],
    ) -> Result<Self> {
        if cameras.len() != bases.timesteps() {
            return Err(Error::DimensionMismatch(format!(
                "{} cameras for {} timesteps",
                cameras.len(),
                bases.timesteps()
            )));
        }
        let (w, h) = (cameras[0].width, cameras[0].height);
        if cameras.iter().any(|c| (c.width, c.height) != (w, h)) {
            return Err(Error::DimensionMismatch("cameras disagree on image size".into()));
        }
        for g in &gaussians {
            g.validate()?;
            if g.motion_logits.len() != bases.count() {
                return Err(Error::DimensionMismatch(format!(
                    "{} motion coefficients for {} bases",
                    g.motion_logits.len(),
                    bases.count()
                )));
            }
        }
        if background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidArgument("background color outside [0, 1]".into()));
        }
        Ok(Self {
            gaussians,
            bases,
            cameras,
            background,
        })
    }

    pub fn gaussians(&self) -> &[Gaussian3D] {
        &self.gaussians
    }

    pub fn bases(&self) -> &MotionBasisSet {
        &self.bases
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn background(&self) -> [f64; 3] {
        self.background
    }

    pub fn timesteps(&self) -> usize {
        self.bases.timesteps()
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.cameras[0].width, self.cameras[0].height)
    }

    /// Gaussian centers at every timestep, `[t][i]`.
    pub fn centers(&self) -> Vec<Vec<[f64; 3]>> {
        (0..self.timesteps())
            .map(|t| {
                self.gaussians
                    .iter()
                    .map(|g| geometry::blend_motion(g, &self.bases, t).apply_to(&g.mu0))
                    .collect()
            })
            .collect()
    }

    /// Moves the whole scene by `tr` and every camera by `tr⁻¹`. Motion bases
    /// are conjugated by `tr`. Renders are unchanged whenever the blended
    /// motion commutes with the conjugation: for pure-rotation `tr`, or when
    /// all bases share their rotation at each timestep.
    pub fn transformed(&self, tr: &RigidTransform) -> Result<Self> {
        let gaussians = self
            .gaussians
            .iter()
            .map(|g| Gaussian3D {
                mu0: tr.apply(&Vector3::from(g.mu0)).into(),
                rotation: quat::normalize(&quat::mul(&tr.rotation, &g.rotation)),
                ..g.clone()
            })
            .collect();
        let inv = tr.inverse();
        let bases = self
            .bases
            .bases
            .iter()
            .map(|b| b.iter().map(|bt| tr.compose(&bt.compose(&inv))).collect())
            .collect();
        let cameras = self
            .cameras
            .iter()
            .map(|c| Camera {
                extrinsic: c.extrinsic.compose(&inv),
                ..*c
            })
            .collect();
        Self::new(gaussians, MotionBasisSet::new(bases)?, cameras, self.background)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GaussianScene = serde_json::from_str(text)?;
        Self::new(
            raw.gaussians,
            MotionBasisSet::new(raw.bases.bases)?,
            raw.cameras,
            raw.background,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
