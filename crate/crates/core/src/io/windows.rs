//! Rolling-window frame selection and cross-window scene assembly.
//!
//! Long captures are processed as overlapping fixed-length windows of
//! frames; each window yields a scene on its own clock. Merging shifts every
//! window's temporal centers onto one shared clock and concatenates, relying
//! on lifespans to localize each window's content in time.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::GaussianScene;
use crate::tokens::window_subsample;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowPlan {
    /// Frames per window.
    pub window_size: usize,
    /// Stride for picking input frames inside a window.
    pub input_stride: usize,
    /// Frames between consecutive window starts; at most `window_size` so
    /// windows cover every frame.
    pub hop: usize,
}

impl Default for WindowPlan {
    fn default() -> Self {
        WindowPlan {
            window_size: 128,
            input_stride: 2,
            hop: 64,
        }
    }
}

/// One planned window over the frame sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Window {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    /// Absolute indices of the frames used as inputs.
    pub input_indices: Vec<usize>,
}

/// Splits `frame_count` frames into overlapping windows: starts advance by
/// `hop` and the final window is clamped against the tail so every frame is
/// covered. Input indices subsample each window by `input_stride`.
pub fn plan_windows(frame_count: usize, plan: &WindowPlan) -> Result<Vec<Window>> {
    if frame_count == 0 {
        return Err(Error::domain("no frames to plan".to_string()));
    }
    if plan.window_size == 0 || plan.hop == 0 || plan.input_stride == 0 {
        return Err(Error::domain("window plan fields must be >= 1".to_string()));
    }
    if plan.hop > plan.window_size {
        return Err(Error::domain(format!(
            "hop {} exceeds window size {}, frames would be skipped",
            plan.hop, plan.window_size
        )));
    }
    let mut windows = Vec::new();
    let mut start = 0;
    loop {
        let last = start + plan.window_size >= frame_count;
        if last {
            start = frame_count.saturating_sub(plan.window_size);
        }
        let end = (start + plan.window_size).min(frame_count);
        let len = end - start;
        let inputs = window_subsample(len, plan.input_stride.min(len))?;
        windows.push(Window {
            start,
            end,
            input_indices: inputs.into_iter().map(|i| start + i).collect(),
        });
        if last {
            break;
        }
        start += plan.hop;
    }
    Ok(windows)
}

/// Concatenates per-window scenes onto the first window's clock: every
/// Gaussian's temporal center is shifted by the difference of time bases.
/// Counts add; nothing is deduplicated.
pub fn merge_windows(scenes: &[GaussianScene]) -> GaussianScene {
    let Some(first) = scenes.first() else {
        return GaussianScene::new();
    };
    let mut out = GaussianScene::with_capacity(scenes.iter().map(|s| s.len()).sum());
    out.time_base = first.time_base;
    for scene in scenes {
        let shift = scene.time_base - out.time_base;
        out.positions.extend_from_slice(&scene.positions);
        out.scales.extend_from_slice(&scene.scales);
        out.orientations.extend_from_slice(&scene.orientations);
        out.opacities.extend_from_slice(&scene.opacities);
        out.colors.extend_from_slice(&scene.colors);
        out.t_centers.extend(scene.t_centers.iter().map(|c| c + shift));
        out.lifespans.extend_from_slice(&scene.lifespans);
        out.velocities.extend_from_slice(&scene.velocities);
        out.ang_velocities.extend_from_slice(&scene.ang_velocities);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraIntrinsics, CameraPose};
    use crate::math::{Quat, Vec3};
    use crate::model::Gaussian4D;
    use crate::render::{render, RenderConfig};

    #[test]
    fn one_full_window_with_strided_inputs() {
        let plan = WindowPlan::default();
        let windows = plan_windows(128, &plan).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!((windows[0].start, windows[0].end), (0, 128));
        assert_eq!(windows[0].input_indices.len(), 64);
        assert_eq!(windows[0].input_indices[..3], [0, 2, 4]);
    }

    #[test]
    fn overlapping_windows_clamp_to_the_tail() {
        let plan = WindowPlan::default();
        let windows = plan_windows(256, &plan).unwrap();
        let starts: Vec<usize> = windows.iter().map(|w| w.start).collect();
        assert_eq!(starts, vec![0, 64, 128]);
        assert!(windows.iter().all(|w| w.end - w.start == 128));
    }

    #[test]
    fn short_sequence_gives_one_clamped_window() {
        let windows = plan_windows(10, &WindowPlan::default()).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!((windows[0].start, windows[0].end), (0, 10));
        assert_eq!(windows[0].input_indices, vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn every_frame_is_covered() {
        for frame_count in [1, 5, 64, 100, 128, 129, 200, 256, 1000] {
            for hop in [1, 7, 64, 128] {
                let plan = WindowPlan {
                    hop,
                    ..WindowPlan::default()
                };
                let windows = plan_windows(frame_count, &plan).unwrap();
                let mut covered = vec![false; frame_count];
                for w in &windows {
                    assert!(w.start < w.end && w.end <= frame_count);
                    for c in covered[w.start..w.end].iter_mut() {
                        *c = true;
                    }
                }
                assert!(covered.iter().all(|c| *c), "n={frame_count} hop={hop}");
            }
        }
    }

    #[test]
    fn plan_rejects_gapped_hops() {
        let plan = WindowPlan {
            window_size: 16,
            input_stride: 2,
            hop: 17,
        };
        assert!(plan_windows(100, &plan).is_err());
        assert!(plan_windows(0, &WindowPlan::default()).is_err());
    }

    fn window_scene(time_base: f64, t_center: f64, lifespan: f64, z: f64) -> GaussianScene {
        GaussianScene::from_gaussians(
            [Gaussian4D::new(
                Vec3::new(0.0, 0.0, z),
                [0.4, 0.4],
                Quat::IDENTITY,
                0.9,
                Vec3::new(0.8, 0.1, 0.1),
                t_center,
                lifespan,
                Vec3::ZERO,
                Vec3::ZERO,
            )],
            time_base,
        )
    }

    #[test]
    fn single_window_merge_is_identity() {
        let scene = window_scene(5.0, 0.25, 2.0, 3.0);
        assert_eq!(merge_windows(std::slice::from_ref(&scene)), scene);
        assert!(merge_windows(&[]).is_empty());
    }

    #[test]
    fn merge_concatenates_and_shifts_clocks() {
        let a = window_scene(0.0, 0.0, 1.0, 2.0);
        let b = window_scene(4.0, 0.5, 1.0, 3.0);
        let merged = merge_windows(&[a.clone(), b.clone()]);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged.time_base, 0.0);
        assert_eq!(merged.t_centers, vec![0.0, 4.5]);
        assert_eq!(merged.positions[1], b.positions[0]);
        assert_eq!(merged.opacities, vec![0.9, 0.9]);
    }

    #[test]
    fn merged_scene_matches_single_window_inside_its_support() {
        // Two windows whose lifespans do not overlap on the global clock:
        // rendering inside window b's support must match b alone.
        let intr = CameraIntrinsics {
            fx: 30.0,
            fy: 30.0,
            cx: 16.0,
            cy: 16.0,
            width: 32,
            height: 32,
        };
        let a = window_scene(0.0, 0.5, 0.1, 2.0);
        let b = window_scene(100.0, 0.5, 0.1, 3.0);
        let merged = merge_windows(&[a, b.clone()]);
        let cfg = RenderConfig::default();
        let t = 100.5;
        let merged_out = render(&merged, &intr, &CameraPose::IDENTITY, t, &cfg).unwrap();
        let single_out = render(&b, &intr, &CameraPose::IDENTITY, t, &cfg).unwrap();
        assert!(merged_out.color.max_abs_diff(&single_out.color) < 1e-4);
        assert!(merged_out.alpha.max_abs_diff(&single_out.alpha) < 1e-4);
    }
}
