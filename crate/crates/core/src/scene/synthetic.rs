//! Self-rendered desk-scale benchmark: a handful of Gaussians under one rigid
//! motion, seen by a static camera. Frames and depth maps come from
//! [`render`], tracks from the same compositing rule the fitter uses, and the
//! starting point is a seeded perturbation of the ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::fit::{predict_track, FitInputs, Track2D};
use super::quat;
use super::render::render;
use super::{Camera, Gaussian3D, GaussianScene, MotionBasisSet, RigidTransform};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub bases: usize,
    pub focal: f64,
    /// Translation per frame of the whole scene.
    pub velocity: [f64; 3],
    /// Standard deviation of the canonical-center perturbation.
    pub position_noise: f64,
    pub holdout: usize,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            frames: 10,
            bases: 20,
            focal: 70.0,
            velocity: [0.03, -0.012, 0.015],
            position_noise: 0.04,
            holdout: 5,
            seed: 17,
        }
    }
}

pub struct Benchmark {
    pub truth: GaussianScene,
    pub inputs: FitInputs,
    pub init: GaussianScene,
    pub holdout: usize,
}

const CENTERS: [[f64; 3]; 5] = [
    [-0.45, -0.30, 3.0],
    [0.40, -0.32, 3.2],
    [-0.12, 0.32, 2.8],
    [0.45, 0.36, 3.1],
    [0.02, 0.0, 3.5],
];
const COLORS: [[f64; 3]; 5] = [
    [0.85, 0.20, 0.15],
    [0.15, 0.75, 0.25],
    [0.20, 0.30, 0.85],
    [0.85, 0.80, 0.20],
    [0.70, 0.30, 0.75],
];

/// Builds the benchmark for `spec`.
pub fn desk_benchmark(spec: &BenchmarkSpec) -> Result<Benchmark> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let cam = Camera::centered(spec.focal, spec.width, spec.height, RigidTransform::IDENTITY)?;
    let cameras = vec![cam; spec.frames];
    let unit = Normal::new(0.0, 1.0).expect("valid normal");

    let gaussians: Vec<Gaussian3D> = CENTERS
        .iter()
        .zip(&COLORS)
        .map(|(c, col)| Gaussian3D {
            mu0: *c,
            rotation: quat::from_axis_angle(
                [
                    unit.sample(&mut rng),
                    unit.sample(&mut rng),
                    unit.sample(&mut rng),
                ],
                rng.random_range(0.0..std::f64::consts::PI),
            ),
            scales: [
                rng.random_range(0.10..0.18),
                rng.random_range(0.10..0.18),
                rng.random_range(0.06..0.12),
            ],
            opacity: rng.random_range(0.85..0.95),
            color: *col,
            motion_logits: (0..spec.bases).map(|_| unit.sample(&mut rng)).collect(),
        })
        .collect();
    let motion: Vec<RigidTransform> = (0..spec.frames)
        .map(|t| RigidTransform::translation(spec.velocity.map(|v| v * t as f64)))
        .collect();
    let truth = GaussianScene::new(
        gaussians,
        MotionBasisSet::new(vec![motion; spec.bases])?,
        cameras.clone(),
        [0.08, 0.08, 0.10],
    )?;

    let mut frames = Vec::with_capacity(spec.frames);
    let mut depths = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let r = render(&truth, t)?;
        depths.push(r.surface_depth(0.0));
        frames.push(r.image);
    }

    // Queries: every Gaussian's projected center, plus a coarse grid of
    // well-covered pixels, all at frame 0.
    let first = render(&truth, 0)?;
    let mut queries: Vec<[f64; 2]> = truth.centers()[0]
        .iter()
        .map(|c| cam.pixel_of(&cam.to_camera(&(*c).into())))
        .collect();
    let step = spec.width.max(spec.height) / 6;
    for y in (step / 2..spec.height).step_by(step.max(1)) {
        for x in (step / 2..spec.width).step_by(step.max(1)) {
            if first.opacity[y * spec.width + x] > 0.5 {
                queries.push([x as f64 + 0.5, y as f64 + 0.5]);
            }
        }
    }
    let tracks = queries
        .into_iter()
        .filter_map(|q| {
            predict_track(&truth, 0, q).map(|positions| Track2D {
                query_frame: 0,
                query_pixel: q,
                positions,
            })
        })
        .collect();

    let init = perturb(&truth, spec, &mut rng)?;
    Ok(Benchmark {
        truth,
        inputs: FitInputs {
            frames,
            depths,
            tracks,
            cameras,
        },
        init,
        holdout: spec.holdout,
    })
}

fn perturb(truth: &GaussianScene, spec: &BenchmarkSpec, rng: &mut ChaCha20Rng) -> Result<GaussianScene> {
    let pos = Normal::new(0.0, spec.position_noise).expect("valid normal");
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let gaussians = truth
        .gaussians()
        .iter()
        .map(|g| {
            let wobble = quat::from_axis_angle([unit.sample(rng), unit.sample(rng), unit.sample(rng)], 0.15);
            Gaussian3D {
                mu0: g.mu0.map(|v| v + pos.sample(rng)),
                rotation: quat::normalize(&quat::mul(&wobble, &g.rotation)),
                scales: g.scales.map(|s| s * (0.15 * unit.sample(rng)).exp()),
                opacity: (g.opacity + rng.random_range(-0.1..0.05)).clamp(0.05, 0.95),
                color: g.color.map(|c| (c + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0)),
                motion_logits: g
                    .motion_logits
                    .iter()
                    .map(|l| l + 0.5 * unit.sample(rng))
                    .collect(),
            }
        })
        .collect();
    let bases = truth
        .bases()
        .bases()
        .iter()
        .map(|b| {
            b.iter()
                .enumerate()
                .map(|(t, tr)| {
                    if t == 0 {
                        return Ok(*tr);
                    }
                    let wobble =
                        quat::from_axis_angle([unit.sample(rng), unit.sample(rng), unit.sample(rng)], 0.02);
                    RigidTransform::new(
                        quat::mul(&wobble, &tr.rotation),
                        tr.translation.map(|v| v + 0.02 * unit.sample(rng)),
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianScene::new(
        gaussians,
        MotionBasisSet::new(bases)?,
        truth.cameras().to_vec(),
        truth.background(),
    )
}
