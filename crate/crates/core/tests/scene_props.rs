use ceesim_core::scene::{quat, render, Camera, Gaussian3D, GaussianScene, MotionBasisSet, RigidTransform};
use proptest::prelude::*;

const W: usize = 24;
const H: usize = 20;
const T: usize = 3;

#[derive(Debug, Clone)]
struct GaussianSpec {
    mu: [f64; 3],
    axis: [f64; 3],
    angle: f64,
    scales: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    logits: [f64; 2],
}

fn gaussian_spec() -> impl Strategy<Value = GaussianSpec> {
    (
        (-0.3f64..0.3, -0.25f64..0.25, 2.5f64..4.0),
        prop::array::uniform3(-1f64..1.0),
        -3f64..3.0,
        prop::array::uniform3(0.05f64..0.2),
        0.2f64..0.9,
        prop::array::uniform3(0f64..=1.0),
        prop::array::uniform2(-2f64..2.0),
    )
        .prop_map(
            |((x, y, z), axis, angle, scales, opacity, color, logits)| GaussianSpec {
                mu: [x, y, z],
                axis,
                angle,
                scales,
                opacity,
                color,
                logits,
            },
        )
}

fn unit_axis(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    if n < 1e-6 {
        [0.0, 0.0, 1.0]
    } else {
        [a[0] / n, a[1] / n, a[2] / n]
    }
}

/// Two motion bases over `T` steps. With `shared_rotation` both bases use the
/// same rotation at each step and differ only in translation.
fn build(specs: &[GaussianSpec], shared_rotation: bool) -> GaussianScene {
    let gaussians = specs
        .iter()
        .map(|s| Gaussian3D {
            mu0: s.mu,
            rotation: quat::from_axis_angle(unit_axis(s.axis), s.angle),
            scales: s.scales,
            opacity: s.opacity,
            color: s.color,
            motion_logits: s.logits.to_vec(),
        })
        .collect();
    let bases = (0..2)
        .map(|b| {
            (0..T)
                .map(|t| {
                    let axis = if shared_rotation {
                        [0.0, 1.0, 0.2]
                    } else {
                        [0.3 * b as f64, 1.0, 0.2]
                    };
                    let angle = if shared_rotation {
                        0.04 * t as f64
                    } else {
                        0.04 * (t * (b + 1)) as f64
                    };
                    RigidTransform::new(
                        quat::from_axis_angle(unit_axis(axis), angle),
                        [0.02 * t as f64 * (b as f64 - 0.5), 0.01 * t as f64, 0.0],
                    )
                    .unwrap()
                })
                .collect()
        })
        .collect();
    let cam = Camera::centered(30.0, W, H, RigidTransform::IDENTITY).unwrap();
    GaussianScene::new(
        gaussians,
        MotionBasisSet::new(bases).unwrap(),
        vec![cam; T],
        [0.2, 0.3, 0.1],
    )
    .unwrap()
}

fn max_render_diff(a: &GaussianScene, b: &GaussianScene) -> f64 {
    (0..T)
        .map(|t| {
            let (ra, rb) = (render(a, t).unwrap(), render(b, t).unwrap());
            ra.image
                .data()
                .iter()
                .zip(rb.image.data())
                .chain(ra.depth.iter().zip(&rb.depth))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pure_rotation_of_scene_and_cameras_leaves_renders_unchanged(
        specs in prop::collection::vec(gaussian_spec(), 1..4),
        axis in prop::array::uniform3(-1f64..1.0),
        angle in -3.1f64..3.1,
    ) {
        let scene = build(&specs, false);
        let tr = RigidTransform::new(quat::from_axis_angle(unit_axis(axis), angle), [0.0; 3]).unwrap();
        let moved = scene.transformed(&tr).unwrap();
        prop_assert!(max_render_diff(&scene, &moved) < 1e-6);
    }

    #[test]
    fn rigid_motion_leaves_renders_unchanged_with_shared_basis_rotation(
        specs in prop::collection::vec(gaussian_spec(), 1..4),
        axis in prop::array::uniform3(-1f64..1.0),
        angle in -3.1f64..3.1,
        translation in prop::array::uniform3(-5f64..5.0),
    ) {
        let scene = build(&specs, true);
        let tr = RigidTransform::new(quat::from_axis_angle(unit_axis(axis), angle), translation).unwrap();
        let moved = scene.transformed(&tr).unwrap();
        prop_assert!(max_render_diff(&scene, &moved) < 1e-6);
    }

    #[test]
    fn renders_stay_in_range(specs in prop::collection::vec(gaussian_spec(), 0..5)) {
        let scene = build(&specs, false);
        for t in 0..T {
            let r = render(&scene, t).unwrap();
            prop_assert!(r.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(r.opacity.iter().all(|o| (0.0..1.0).contains(o)));
            prop_assert!(r.depth.iter().all(|d| *d >= 0.0));
        }
    }

    #[test]
    fn scene_json_round_trip(specs in prop::collection::vec(gaussian_spec(), 0..4)) {
        let scene = build(&specs, false);
        prop_assert_eq!(GaussianScene::from_json(&scene.to_json().unwrap()).unwrap(), scene);
    }
}
