//! Shared scene builders for the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splat4d::{CameraIntrinsics, Gaussian4D, GaussianScene, Quat, Vec3};

pub fn square_intrinsics(n: usize) -> CameraIntrinsics {
    CameraIntrinsics {
        fx: n as f64,
        fy: n as f64,
        cx: n as f64 / 2.0,
        cy: n as f64 / 2.0,
        width: n,
        height: n,
    }
}

/// Deterministic random scene in front of the identity camera.
pub fn demo_scene(count: usize, seed: u64) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians: Vec<Gaussian4D> = (0..count)
        .map(|i| {
            Gaussian4D::new(
                Vec3::new(
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                    2.0 + 0.02 * i as f64,
                ),
                [rng.random_range(0.05..0.3), rng.random_range(0.05..0.3)],
                Quat::new(
                    1.0,
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                )
                .normalized(),
                rng.random_range(0.3..0.9),
                Vec3::new(
                    rng.random_range(0.1..0.9),
                    rng.random_range(0.1..0.9),
                    rng.random_range(0.1..0.9),
                ),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.5..4.0),
                Vec3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.1..0.1),
                ),
                Vec3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                ),
            )
        })
        .collect();
    GaussianScene::from_gaussians(gaussians, 0.0)
}
