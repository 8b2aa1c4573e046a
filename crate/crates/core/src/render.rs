//! Tile-based front-to-back surfel compositor.
//!
//! Rendering evaluates the scene at one timestamp, sorts the resulting
//! surfels by camera-space center depth, bins them into pixel tiles by a
//! conservative screen-space bound, and alpha-composites each pixel
//! front-to-back until the transmittance floor is reached. `render_oracle`
//! is the brute-force reference: per pixel it intersects every surfel and
//! sorts the hits by exact ray distance. The two agree wherever the two sort
//! orders agree (scenes with separated depths), which is what the
//! equivalence tests construct.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuf;
use crate::camera::{CameraIntrinsics, CameraPose, Ray};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::model::{evaluate_at_time, GaussianScene, SurfelSnapshot};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    /// Edge length of the square pixel tiles the rasterizer parallelizes
    /// over.
    pub tile_size: usize,
    /// Kernel support radius in splat-local units; contributions beyond it
    /// are exactly zero.
    pub sigma_cutoff: f64,
    /// Front-to-back compositing stops once transmittance drops below this.
    pub transmittance_floor: f64,
    /// Upper bound on any single splat's alpha, keeping 1-alpha away from 0.
    pub alpha_clamp: f64,
    /// Speed above which a Gaussian counts as dynamic.
    pub dyn_velocity_threshold: f64,
    /// Lifespan below which a Gaussian counts as dynamic. Conventionally half
    /// the duration of the video window being rendered; see
    /// [`RenderConfig::with_window_duration`].
    pub dyn_lifespan_threshold: f64,
    /// Color composited behind the scene.
    pub background: Vec3,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            tile_size: 16,
            sigma_cutoff: 3.0,
            transmittance_floor: 1e-4,
            alpha_clamp: 0.999,
            dyn_velocity_threshold: 0.05,
            dyn_lifespan_threshold: 1.0,
            background: Vec3::ZERO,
        }
    }
}

impl RenderConfig {
    /// Sets the dynamic-mask lifespan threshold to half the given window
    /// duration.
    pub fn with_window_duration(mut self, seconds: f64) -> Self {
        self.dyn_lifespan_threshold = 0.5 * seconds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size < 1 {
            return Err(Error::domain("tile_size must be >= 1".to_string()));
        }
        if self.sigma_cutoff.is_nan() || self.sigma_cutoff <= 0.0 {
            return Err(Error::domain("sigma_cutoff must be > 0".to_string()));
        }
        if self.alpha_clamp.is_nan() || self.alpha_clamp <= 0.0 || self.alpha_clamp >= 1.0 {
            return Err(Error::domain("alpha_clamp must be in (0,1)".to_string()));
        }
        if self.transmittance_floor.is_nan() || self.transmittance_floor < 0.0 {
            return Err(Error::domain("transmittance_floor must be >= 0".to_string()));
        }
        if [self.dyn_velocity_threshold, self.dyn_lifespan_threshold]
            .iter()
            .any(|v| v.is_nan() || *v <= 0.0)
        {
            return Err(Error::domain(
                "dynamic-mask thresholds must be > 0".to_string(),
            ));
        }
        Ok(())
    }
}

/// All per-pixel planes produced by one render call.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    /// H×W×3 in [0, 1] (over the configured background).
    pub color: ImageBuf,
    /// H×W coverage in [0, 1].
    pub alpha: ImageBuf,
    /// H×W alpha-weighted mean ray-hit distance; 0 where nothing renders.
    pub depth: ImageBuf,
    /// H×W×3 world-space unit normals flipped toward the camera; zero where
    /// nothing renders.
    pub normal: ImageBuf,
    /// H×W×2 pixel displacements; zeros unless produced by [`render_flow`].
    pub flow: ImageBuf,
    /// H×W alpha-composited share of dynamic (fast or short-lived) surfels.
    pub dynamic_mask: ImageBuf,
}

impl RenderOutput {
    fn new(width: usize, height: usize) -> Self {
        RenderOutput {
            color: ImageBuf::new(width, height, 3),
            alpha: ImageBuf::new(width, height, 1),
            depth: ImageBuf::new(width, height, 1),
            normal: ImageBuf::new(width, height, 3),
            flow: ImageBuf::new(width, height, 2),
            dynamic_mask: ImageBuf::new(width, height, 1),
        }
    }
}

/// Ray–surfel-plane intersection in splat-local coordinates.
///
/// Returns `(u, v, lambda)` where `lambda` is the hit distance along the ray
/// and `(u, v)` are the in-plane offsets in units of the two scale axes.
/// Misses when the ray is parallel to the plane or the hit is behind the
/// origin.
#[inline]
pub fn intersect_surfel(
    snap: &SurfelSnapshot,
    ray_origin: Vec3,
    ray_dir: Vec3,
) -> Option<(f64, f64, f64)> {
    let [r1, r2, r3] = snap.orientation_t.rotation_columns();
    let denom = ray_dir.dot(r3);
    if denom.abs() < 1e-9 {
        return None;
    }
    let lambda = (snap.position_t - ray_origin).dot(r3) / denom;
    if lambda <= 0.0 {
        return None;
    }
    let d = ray_origin + ray_dir * lambda - snap.position_t;
    Some((d.dot(r1) / snap.scale[0], d.dot(r2) / snap.scale[1], lambda))
}

/// Gaussian splat kernel: `min(alpha_clamp, opacity_t · exp(-(u²+v²)/2))`,
/// exactly zero beyond the sigma cutoff.
#[inline]
pub fn splat_alpha(u: f64, v: f64, opacity_t: f64, cfg: &RenderConfig) -> f64 {
    let r2 = u * u + v * v;
    if r2 > cfg.sigma_cutoff * cfg.sigma_cutoff {
        return 0.0;
    }
    (opacity_t * (-0.5 * r2).exp()).min(cfg.alpha_clamp)
}

/// One composited contribution to a pixel, recorded front-to-back.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Hit {
    pub index: u32,
    pub alpha: f64,
    /// Transmittance before this hit.
    pub trans: f64,
    pub u: f64,
    pub v: f64,
    pub lambda: f64,
    /// Kernel value exp(-(u²+v²)/2).
    pub kernel: f64,
    /// True when alpha saturated at the clamp (gradient of alpha is zero).
    pub clamped: bool,
}

/// Scene prepared for per-pixel traversal: snapshots plus per-tile candidate
/// lists in front-to-back (camera-z, index) order.
pub(crate) struct Prep {
    pub snaps: Vec<SurfelSnapshot>,
    pub tiles: Vec<Vec<u32>>,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub tile_size: usize,
}

impl Prep {
    #[inline]
    pub fn tile_for_pixel(&self, px: usize, py: usize) -> &[u32] {
        &self.tiles[(py / self.tile_size) * self.tiles_x + px / self.tile_size]
    }
}

/// Conservative inclusive pixel bounds of the sphere of radius `r` around
/// camera-space center `c`; `None` when it cannot reach any forward ray.
/// Inclusive pixel rectangle (x0, x1, y0, y1).
type PixelBounds = (usize, usize, usize, usize);

fn pixel_bounds(c: Vec3, r: f64, intr: &CameraIntrinsics) -> Option<PixelBounds> {
    let (w, h) = (intr.width, intr.height);
    if c.z + r <= 1e-12 {
        return None;
    }
    if c.z - r <= 1e-12 {
        // Straddles the camera plane: no finite projected bound.
        return Some((0, 0, w - 1, h - 1));
    }
    let (zmin, zmax) = (c.z - r, c.z + r);
    let lo = |num: f64| if num >= 0.0 { num / zmax } else { num / zmin };
    let hi = |num: f64| if num <= 0.0 { num / zmax } else { num / zmin };
    let u_lo = intr.fx * lo(c.x - r) + intr.cx;
    let u_hi = intr.fx * hi(c.x + r) + intr.cx;
    let v_lo = intr.fy * lo(c.y - r) + intr.cy;
    let v_hi = intr.fy * hi(c.y + r) + intr.cy;
    let x0 = (u_lo - 0.5).floor() - 1.0;
    let x1 = (u_hi - 0.5).ceil() + 1.0;
    let y0 = (v_lo - 0.5).floor() - 1.0;
    let y1 = (v_hi - 0.5).ceil() + 1.0;
    if x1 < 0.0 || y1 < 0.0 || x0 > (w - 1) as f64 || y0 > (h - 1) as f64 {
        return None;
    }
    Some((
        x0.max(0.0) as usize,
        y0.max(0.0) as usize,
        x1.min((w - 1) as f64) as usize,
        y1.min((h - 1) as f64) as usize,
    ))
}

pub(crate) fn prepare(
    scene: &GaussianScene,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    t: f64,
    cfg: &RenderConfig,
) -> Prep {
    let snaps = evaluate_at_time(scene, t);
    let tile_size = cfg.tile_size;
    let tiles_x = intr.width.div_ceil(tile_size);
    let tiles_y = intr.height.div_ceil(tile_size);

    let mut visible: Vec<(u32, f64, PixelBounds)> = Vec::new();
    for (i, s) in snaps.iter().enumerate() {
        let c = pose.world_to_camera(s.position_t);
        let r = cfg.sigma_cutoff * s.scale[0].max(s.scale[1]);
        if let Some(bounds) = pixel_bounds(c, r, intr) {
            visible.push((i as u32, c.z, bounds));
        }
    }
    visible.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    for &(i, _, (x0, y0, x1, y1)) in &visible {
        for ty in (y0 / tile_size)..=(y1 / tile_size) {
            for tx in (x0 / tile_size)..=(x1 / tile_size) {
                tiles[ty * tiles_x + tx].push(i);
            }
        }
    }
    Prep {
        snaps,
        tiles,
        tiles_x,
        tiles_y,
        tile_size,
    }
}

/// Walks `candidates` front-to-back, recording composited hits until the
/// transmittance floor; returns the final transmittance.
pub(crate) fn collect_hits(
    snaps: &[SurfelSnapshot],
    candidates: &[u32],
    ray: &Ray,
    cfg: &RenderConfig,
    hits: &mut Vec<Hit>,
) -> f64 {
    hits.clear();
    let mut trans = 1.0;
    for &i in candidates {
        if trans < cfg.transmittance_floor {
            break;
        }
        let snap = &snaps[i as usize];
        let Some((u, v, lambda)) = intersect_surfel(snap, ray.origin, ray.dir) else {
            continue;
        };
        let r2 = u * u + v * v;
        if r2 > cfg.sigma_cutoff * cfg.sigma_cutoff {
            continue;
        }
        let kernel = (-0.5 * r2).exp();
        let raw = snap.opacity_t * kernel;
        let clamped = raw > cfg.alpha_clamp;
        let alpha = if clamped { cfg.alpha_clamp } else { raw };
        if alpha <= 0.0 {
            continue;
        }
        hits.push(Hit {
            index: i,
            alpha,
            trans,
            u,
            v,
            lambda,
            kernel,
            clamped,
        });
        trans *= 1.0 - alpha;
    }
    trans
}

/// Per-Gaussian dynamic indicator: moving faster than the velocity threshold
/// or shorter-lived than the lifespan threshold.
#[inline]
pub(crate) fn dynamic_indicator(scene: &GaussianScene, i: usize, cfg: &RenderConfig) -> f64 {
    let fast = scene.velocities[i].norm() > cfg.dyn_velocity_threshold;
    let brief = scene.lifespans[i] < cfg.dyn_lifespan_threshold;
    if fast || brief {
        1.0
    } else {
        0.0
    }
}

struct TilePlanes {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    // w*h*3, w*h, w*h, w*h*3, w*h
    color: Vec<f64>,
    alpha: Vec<f64>,
    depth: Vec<f64>,
    normal: Vec<f64>,
    mask: Vec<f64>,
}

/// Renders color, alpha, depth, normal, and dynamic-mask planes at time `t`.
pub fn render(
    scene: &GaussianScene,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    t: f64,
    cfg: &RenderConfig,
) -> Result<RenderOutput> {
    intr.validate()?;
    cfg.validate()?;
    scene.validate()?;

    let prep = prepare(scene, intr, pose, t, cfg);
    let indicators: Vec<f64> = (0..scene.len())
        .map(|i| dynamic_indicator(scene, i, cfg))
        .collect();

    let n_tiles = prep.tiles_x * prep.tiles_y;
    let tile_results: Vec<TilePlanes> = (0..n_tiles)
        .into_par_iter()
        .map(|ti| {
            let tx = ti % prep.tiles_x;
            let ty = ti / prep.tiles_x;
            let x0 = tx * prep.tile_size;
            let y0 = ty * prep.tile_size;
            let w = prep.tile_size.min(intr.width - x0);
            let h = prep.tile_size.min(intr.height - y0);
            let mut out = TilePlanes {
                x0,
                y0,
                w,
                h,
                color: vec![0.0; w * h * 3],
                alpha: vec![0.0; w * h],
                depth: vec![0.0; w * h],
                normal: vec![0.0; w * h * 3],
                mask: vec![0.0; w * h],
            };
            let candidates = &prep.tiles[ti];
            let mut hits: Vec<Hit> = Vec::new();
            for dy in 0..h {
                for dx in 0..w {
                    let (px, py) = (x0 + dx, y0 + dy);
                    let ray = pose.ray_through_pixel(intr, px, py);
                    let trans = collect_hits(&prep.snaps, candidates, &ray, cfg, &mut hits);

                    let mut color = Vec3::ZERO;
                    let mut depth = 0.0;
                    let mut normal = Vec3::ZERO;
                    let mut mask = 0.0;
                    for hit in &hits {
                        let snap = &prep.snaps[hit.index as usize];
                        let weight = hit.alpha * hit.trans;
                        color += snap.color * weight;
                        depth += hit.lambda * weight;
                        let n = if snap.normal_t.dot(ray.dir) > 0.0 {
                            -snap.normal_t
                        } else {
                            snap.normal_t
                        };
                        normal += n * weight;
                        mask += indicators[hit.index as usize] * weight;
                    }
                    let alpha = 1.0 - trans;
                    color += cfg.background * trans;
                    let norm_unit = normal.normalized();
                    let pix = dy * w + dx;
                    out.color[pix * 3] = color.x;
                    out.color[pix * 3 + 1] = color.y;
                    out.color[pix * 3 + 2] = color.z;
                    out.alpha[pix] = alpha;
                    out.depth[pix] = depth / (alpha + 1e-10);
                    out.normal[pix * 3] = norm_unit.x;
                    out.normal[pix * 3 + 1] = norm_unit.y;
                    out.normal[pix * 3 + 2] = norm_unit.z;
                    out.mask[pix] = mask / (alpha + 1e-10);
                }
            }
            out
        })
        .collect();

    let mut out = RenderOutput::new(intr.width, intr.height);
    for tile in tile_results {
        for dy in 0..tile.h {
            for dx in 0..tile.w {
                let (px, py) = (tile.x0 + dx, tile.y0 + dy);
                let pix = dy * tile.w + dx;
                for c in 0..3 {
                    out.color.set(px, py, c, tile.color[pix * 3 + c]);
                    out.normal.set(px, py, c, tile.normal[pix * 3 + c]);
                }
                out.alpha.set(px, py, 0, tile.alpha[pix]);
                out.depth.set(px, py, 0, tile.depth[pix]);
                out.dynamic_mask.set(px, py, 0, tile.mask[pix]);
            }
        }
    }
    Ok(out)
}

/// Brute-force reference renderer: per pixel, intersects every surfel and
/// composites in exact ray-distance order. No tiles, no screen-space culling.
pub fn render_oracle(
    scene: &GaussianScene,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    t: f64,
    cfg: &RenderConfig,
) -> Result<RenderOutput> {
    intr.validate()?;
    cfg.validate()?;
    scene.validate()?;

    let snaps = evaluate_at_time(scene, t);
    let indicators: Vec<f64> = (0..scene.len())
        .map(|i| dynamic_indicator(scene, i, cfg))
        .collect();
    let mut out = RenderOutput::new(intr.width, intr.height);

    for py in 0..intr.height {
        for px in 0..intr.width {
            let ray = pose.ray_through_pixel(intr, px, py);
            // (lambda, index, alpha, normal-flip sign)
            let mut pixel_hits: Vec<(f64, u32, f64)> = Vec::new();
            for (i, snap) in snaps.iter().enumerate() {
                let Some((u, v, lambda)) = intersect_surfel(snap, ray.origin, ray.dir) else {
                    continue;
                };
                let alpha = splat_alpha(u, v, snap.opacity_t, cfg);
                if alpha > 0.0 {
                    pixel_hits.push((lambda, i as u32, alpha));
                }
            }
            pixel_hits.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let mut trans = 1.0;
            let mut color = Vec3::ZERO;
            let mut depth = 0.0;
            let mut normal = Vec3::ZERO;
            let mut mask = 0.0;
            for &(lambda, i, alpha) in &pixel_hits {
                if trans < cfg.transmittance_floor {
                    break;
                }
                let snap = &snaps[i as usize];
                let weight = alpha * trans;
                color += snap.color * weight;
                depth += lambda * weight;
                let n = if snap.normal_t.dot(ray.dir) > 0.0 {
                    -snap.normal_t
                } else {
                    snap.normal_t
                };
                normal += n * weight;
                mask += indicators[i as usize] * weight;
                trans *= 1.0 - alpha;
            }
            let alpha = 1.0 - trans;
            color += cfg.background * trans;
            let norm_unit = normal.normalized();
            out.color.set(px, py, 0, color.x);
            out.color.set(px, py, 1, color.y);
            out.color.set(px, py, 2, color.z);
            out.alpha.set(px, py, 0, alpha);
            out.depth.set(px, py, 0, depth / (alpha + 1e-10));
            out.normal.set(px, py, 0, norm_unit.x);
            out.normal.set(px, py, 1, norm_unit.y);
            out.normal.set(px, py, 2, norm_unit.z);
            out.dynamic_mask.set(px, py, 0, mask / (alpha + 1e-10));
        }
    }
    Ok(out)
}

/// Optical flow from `t0` to `t1`: compositing weights are taken at `t0` and
/// each surfel contributes the projected pixel displacement of its center.
/// Returns an H×W×2 plane of (du, dv).
pub fn render_flow(
    scene: &GaussianScene,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    t0: f64,
    t1: f64,
    cfg: &RenderConfig,
) -> Result<ImageBuf> {
    intr.validate()?;
    cfg.validate()?;
    scene.validate()?;

    let prep = prepare(scene, intr, pose, t0, cfg);
    let local_t0 = t0 - scene.time_base;
    let local_t1 = t1 - scene.time_base;
    let displacement: Vec<(f64, f64)> = (0..scene.len())
        .map(|i| {
            let g = scene.gaussian(i);
            let a = pose.project(intr, g.position_at(local_t0));
            let b = pose.project(intr, g.position_at(local_t1));
            match (a, b) {
                (Some((u0, v0)), Some((u1, v1))) => (u1 - u0, v1 - v0),
                // A center that leaves the view frustum has no defined
                // projected motion; contribute none.
                _ => (0.0, 0.0),
            }
        })
        .collect();

    let mut flow = ImageBuf::new(intr.width, intr.height, 2);
    let rows: Vec<Vec<f64>> = (0..intr.height)
        .into_par_iter()
        .map(|py| {
            let mut row = vec![0.0; intr.width * 2];
            let mut hits: Vec<Hit> = Vec::new();
            for px in 0..intr.width {
                let ray = pose.ray_through_pixel(intr, px, py);
                let candidates = prep.tile_for_pixel(px, py);
                let trans = collect_hits(&prep.snaps, candidates, &ray, cfg, &mut hits);
                let mut du = 0.0;
                let mut dv = 0.0;
                for hit in &hits {
                    let weight = hit.alpha * hit.trans;
                    let d = displacement[hit.index as usize];
                    du += d.0 * weight;
                    dv += d.1 * weight;
                }
                let alpha = 1.0 - trans;
                row[px * 2] = du / (alpha + 1e-10);
                row[px * 2 + 1] = dv / (alpha + 1e-10);
            }
            row
        })
        .collect();
    for (py, row) in rows.into_iter().enumerate() {
        for px in 0..intr.width {
            flow.set(px, py, 0, row[px * 2]);
            flow.set(px, py, 1, row[px * 2 + 1]);
        }
    }
    Ok(flow)
}

/// Alpha-composited dynamic-content mask at time `t` (the `dynamic_mask`
/// plane of [`render`]).
pub fn render_dynamic_mask(
    scene: &GaussianScene,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    t: f64,
    cfg: &RenderConfig,
) -> Result<ImageBuf> {
    Ok(render(scene, intr, pose, t, cfg)?.dynamic_mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Quat;
    use crate::model::Gaussian4D;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr64() -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 60.0,
            fy: 60.0,
            cx: 32.0,
            cy: 32.0,
            width: 64,
            height: 64,
        }
    }

    fn static_gaussian(position: Vec3, scale: f64, opacity: f64, color: Vec3) -> Gaussian4D {
        Gaussian4D::new(
            position,
            [scale, scale],
            Quat::IDENTITY,
            opacity,
            color,
            0.0,
            1e6,
            Vec3::ZERO,
            Vec3::ZERO,
        )
    }

    /// Random scene with per-Gaussian depth bands wide enough that the
    /// global center-depth order equals the per-pixel hit order.
    fn depth_separated_scene(rng: &mut ChaCha8Rng, count: usize) -> GaussianScene {
        let mut scene = GaussianScene::new();
        for i in 0..count {
            let z = 2.0 + i as f64 * 0.25;
            let tilt = Vec3::new(
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                0.0,
            );
            scene.push(Gaussian4D::new(
                Vec3::new(rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9), z),
                [rng.random_range(0.005..0.02), rng.random_range(0.005..0.02)],
                Quat::from_angle_axis(tilt),
                rng.random_range(0.2..1.0),
                Vec3::new(rng.random(), rng.random(), rng.random()),
                rng.random_range(-0.2..0.2),
                rng.random_range(2.0..50.0),
                Vec3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                ),
                Vec3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                ),
            ));
        }
        scene
    }

    fn max_output_diff(a: &RenderOutput, b: &RenderOutput) -> f64 {
        a.color
            .max_abs_diff(&b.color)
            .max(a.alpha.max_abs_diff(&b.alpha))
            .max(a.depth.max_abs_diff(&b.depth))
            .max(a.normal.max_abs_diff(&b.normal))
            .max(a.dynamic_mask.max_abs_diff(&b.dynamic_mask))
    }

    #[test]
    fn intersect_axis_aligned_surfel() {
        let g = static_gaussian(Vec3::new(0.0, 0.0, 1.0), 1.0, 1.0, Vec3::ZERO);
        let snap = g.snapshot_at(0.0);
        let (u, v, lambda) =
            intersect_surfel(&snap, Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((u, v, lambda), (0.0, 0.0, 1.0));
    }

    #[test]
    fn intersect_misses_parallel_ray() {
        let g = static_gaussian(Vec3::new(0.0, 0.0, 1.0), 1.0, 1.0, Vec3::ZERO);
        let snap = g.snapshot_at(0.0);
        assert!(intersect_surfel(&snap, Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn intersect_misses_behind_origin() {
        let g = static_gaussian(Vec3::new(0.0, 0.0, -1.0), 1.0, 1.0, Vec3::ZERO);
        let snap = g.snapshot_at(0.0);
        assert!(intersect_surfel(&snap, Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0)).is_none());
    }

    #[test]
    fn intersection_point_lies_on_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..300 {
            let g = Gaussian4D::new(
                Vec3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(1.0..5.0),
                ),
                [rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)],
                Quat::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
                1.0,
                Vec3::ZERO,
                0.0,
                1.0,
                Vec3::ZERO,
                Vec3::ZERO,
            );
            let snap = g.snapshot_at(0.0);
            let dir = Vec3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                1.0,
            )
            .normalized();
            if let Some((u, v, lambda)) = intersect_surfel(&snap, Vec3::ZERO, dir) {
                let p = dir * lambda;
                assert!((p - snap.position_t).dot(snap.normal_t).abs() < 1e-9);
                let [r1, r2, _] = snap.orientation_t.rotation_columns();
                let rebuilt =
                    snap.position_t + r1 * (u * snap.scale[0]) + r2 * (v * snap.scale[1]);
                assert!((rebuilt - p).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn splat_alpha_examples() {
        let cfg = RenderConfig::default();
        assert_eq!(splat_alpha(0.0, 0.0, 0.8, &cfg), 0.8);
        assert_eq!(splat_alpha(3.0003, 0.0, 1.0, &cfg), 0.0);
        assert!((splat_alpha(1.0, 1.0, 1.0, &cfg) - 0.36787944117144233).abs() < 1e-15);
        assert_eq!(splat_alpha(0.0, 0.0, 1.0, &cfg), cfg.alpha_clamp);
    }

    #[test]
    fn empty_scene_renders_background() {
        let cfg = RenderConfig {
            background: Vec3::new(0.1, 0.2, 0.3),
            ..RenderConfig::default()
        };
        let out = render(
            &GaussianScene::new(),
            &intr64(),
            &CameraPose::IDENTITY,
            0.0,
            &cfg,
        )
        .unwrap();
        for py in 0..64 {
            for px in 0..64 {
                assert_eq!(out.color.pixel(px, py), &[0.1, 0.2, 0.3]);
                assert_eq!(out.alpha.get(px, py, 0), 0.0);
                assert_eq!(out.depth.get(px, py, 0), 0.0);
                assert_eq!(out.normal.pixel(px, py), &[0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn zero_sized_image_is_domain_error() {
        let intr = CameraIntrinsics {
            width: 0,
            ..intr64()
        };
        assert!(render(
            &GaussianScene::new(),
            &intr,
            &CameraPose::IDENTITY,
            0.0,
            &RenderConfig::default()
        )
        .is_err());
    }

    #[test]
    fn single_splat_center_pixel() {
        let color = Vec3::new(0.9, 0.4, 0.1);
        let scene = GaussianScene::from_gaussians(
            [static_gaussian(Vec3::new(0.0, 0.0, 2.0), 0.5, 1.0, color)],
            0.0,
        );
        let cfg = RenderConfig::default();
        let out = render(&scene, &intr64(), &CameraPose::IDENTITY, 0.0, &cfg).unwrap();
        // Center pixel (31,31) has ray offset (0.5/60, 0.5/60, 1)·unit: u,v tiny.
        let got = out.color.pixel(31, 31);
        for (c, (g, want)) in got.iter().zip(color.to_array()).enumerate() {
            assert!(
                (g - want).abs() <= 1.0 - cfg.alpha_clamp + 1e-6,
                "channel {c}: {g} vs {want}"
            );
        }
        // Depth equals the ray-plane distance of this pixel's ray.
        let ray = CameraPose::IDENTITY.ray_through_pixel(&intr64(), 31, 31);
        let snap = scene.gaussian(0).snapshot_at(0.0);
        let (_, _, lambda) = intersect_surfel(&snap, ray.origin, ray.dir).unwrap();
        assert!((out.depth.get(31, 31, 0) - lambda).abs() < 1e-6);
        // Half-pixel offset puts the kernel a hair under the clamp.
        assert!(out.alpha.get(31, 31, 0) > 0.998);
        // Normal faces the camera.
        assert!(out.normal.get(31, 31, 2) < -0.99);
    }

    #[test]
    fn tiled_render_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for _ in 0..3 {
            let scene = depth_separated_scene(&mut rng, 96);
            let cfg = RenderConfig {
                background: Vec3::new(0.2, 0.1, 0.05),
                ..RenderConfig::default()
            };
            let pose = CameraPose::IDENTITY;
            let a = render(&scene, &intr64(), &pose, 0.05, &cfg).unwrap();
            let b = render_oracle(&scene, &intr64(), &pose, 0.05, &cfg).unwrap();
            let diff = max_output_diff(&a, &b);
            assert!(diff < 1e-5, "tiled vs oracle diff {diff}");
        }
    }

    #[test]
    fn occlusion_keeps_nearer_color() {
        let near = static_gaussian(Vec3::new(0.0, 0.0, 1.5), 0.4, 1.0, Vec3::new(1.0, 0.0, 0.0));
        let far = static_gaussian(Vec3::new(0.0, 0.0, 3.0), 0.8, 1.0, Vec3::new(0.0, 1.0, 0.0));
        let scene = GaussianScene::from_gaussians([near, far], 0.0);
        let cfg = RenderConfig::default();
        let out = render(&scene, &intr64(), &CameraPose::IDENTITY, 0.0, &cfg).unwrap();
        let got = out.color.pixel(31, 31);
        assert!((got[0] - 1.0).abs() <= 1.0 - cfg.alpha_clamp + 1e-6);
        assert!(got[1] <= 1.0 - cfg.alpha_clamp + 1e-6);
    }

    #[test]
    fn adding_a_gaussian_never_reduces_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let cfg_exact = RenderConfig {
            transmittance_floor: 0.0,
            ..RenderConfig::default()
        };
        let cfg_default = RenderConfig::default();
        for _ in 0..3 {
            let scene = depth_separated_scene(&mut rng, 24);
            let mut larger = scene.clone();
            larger.push(static_gaussian(
                Vec3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(2.0..7.0),
                ),
                0.3,
                rng.random_range(0.2..1.0),
                Vec3::new(0.5, 0.5, 0.5),
            ));
            let pose = CameraPose::IDENTITY;
            let before = render(&scene, &intr64(), &pose, 0.0, &cfg_exact).unwrap();
            let after = render(&larger, &intr64(), &pose, 0.0, &cfg_exact).unwrap();
            for (a, b) in before.alpha.data().iter().zip(after.alpha.data()) {
                assert!(*b >= *a - 1e-12);
            }
            // With a positive floor, early termination can clip at most the
            // floor's worth of alpha.
            let before = render(&scene, &intr64(), &pose, 0.0, &cfg_default).unwrap();
            let after = render(&larger, &intr64(), &pose, 0.0, &cfg_default).unwrap();
            for (a, b) in before.alpha.data().iter().zip(after.alpha.data()) {
                assert!(*b >= *a - cfg_default.transmittance_floor);
            }
        }
    }

    #[test]
    fn static_scene_has_exactly_zero_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let mut scene = depth_separated_scene(&mut rng, 32);
        for v in scene.velocities.iter_mut() {
            *v = Vec3::ZERO;
        }
        let flow = render_flow(
            &scene,
            &intr64(),
            &CameraPose::IDENTITY,
            0.0,
            0.5,
            &RenderConfig::default(),
        )
        .unwrap();
        assert!(flow.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equal_times_give_zero_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let scene = depth_separated_scene(&mut rng, 32);
        let flow = render_flow(
            &scene,
            &intr64(),
            &CameraPose::IDENTITY,
            0.25,
            0.25,
            &RenderConfig::default(),
        )
        .unwrap();
        assert!(flow.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn moving_gaussian_flow_matches_projected_displacement() {
        let mut g = static_gaussian(Vec3::new(0.1, -0.05, 2.0), 0.08, 1.0, Vec3::new(1.0, 1.0, 1.0));
        g.velocity = Vec3::new(0.4, -0.2, 0.0);
        let scene = GaussianScene::from_gaussians([g], 0.0);
        let intr = intr64();
        let pose = CameraPose::IDENTITY;
        let (t0, t1) = (0.0, 0.5);
        let flow = render_flow(&scene, &intr, &pose, t0, t1, &RenderConfig::default()).unwrap();
        let (u0, v0) = pose.project(&intr, g.position_at(t0)).unwrap();
        let (u1, v1) = pose.project(&intr, g.position_at(t1)).unwrap();
        let (px, py) = (u0 as usize, v0 as usize);
        let got = flow.pixel(px, py);
        assert!((got[0] - (u1 - u0)).abs() < 0.5, "du {} vs {}", got[0], u1 - u0);
        assert!((got[1] - (v1 - v0)).abs() < 0.5, "dv {} vs {}", got[1], v1 - v0);
    }

    #[test]
    fn dynamic_mask_separates_static_and_moving() {
        let cfg = RenderConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let mut scene = depth_separated_scene(&mut rng, 16);
        for v in scene.velocities.iter_mut() {
            *v = Vec3::ZERO;
        }
        for l in scene.lifespans.iter_mut() {
            *l = 1e6;
        }
        let mask = render_dynamic_mask(&scene, &intr64(), &CameraPose::IDENTITY, 0.0, &cfg).unwrap();
        assert!(mask.data().iter().all(|&v| v == 0.0));

        for v in scene.velocities.iter_mut() {
            *v = Vec3::new(0.2, 0.0, 0.0);
        }
        let out = render(&scene, &intr64(), &CameraPose::IDENTITY, 0.0, &cfg).unwrap();
        for (m, a) in out.dynamic_mask.data().iter().zip(out.alpha.data()) {
            if *a > 0.0 {
                assert!((m - a / (a + 1e-10)).abs() < 1e-9);
                if *a > 1e-3 {
                    assert!((m - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn flow_and_mask_ignore_recoloring() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let scene = depth_separated_scene(&mut rng, 24);
        let mut recolored = scene.clone();
        for c in recolored.colors.iter_mut() {
            *c = Vec3::new(0.123, 0.456, 0.789);
        }
        let cfg = RenderConfig::default();
        let intr = intr64();
        let pose = CameraPose::IDENTITY;
        let f1 = render_flow(&scene, &intr, &pose, 0.0, 0.3, &cfg).unwrap();
        let f2 = render_flow(&recolored, &intr, &pose, 0.0, 0.3, &cfg).unwrap();
        assert_eq!(f1.data(), f2.data());
        let m1 = render_dynamic_mask(&scene, &intr, &pose, 0.0, &cfg).unwrap();
        let m2 = render_dynamic_mask(&recolored, &intr, &pose, 0.0, &cfg).unwrap();
        assert_eq!(m1.data(), m2.data());
    }

    #[test]
    fn render_is_deterministic_across_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let scene = depth_separated_scene(&mut rng, 64);
        let cfg = RenderConfig::default();
        let a = render(&scene, &intr64(), &CameraPose::IDENTITY, 0.1, &cfg).unwrap();
        let b = render(&scene, &intr64(), &CameraPose::IDENTITY, 0.1, &cfg).unwrap();
        assert_eq!(a.color.data(), b.color.data());
        assert_eq!(a.depth.data(), b.depth.data());
    }
}
