//! Central finite differences over the raw parameter vector, the oracle the
//! analytic gradients are validated against.

use crate::camera::Frame;
use crate::error::Result;
use crate::render::{intersect_surfel, RenderConfig};

use super::grad::forward_loss;
use super::params::{decode_params, ParamVector};
use super::FitConfig;

/// Relative step scale for central differences.
pub const FD_STEP_SCALE: f64 = 1e-4;

fn central<F>(f: &mut F, x: f64, h: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let hi = f(x + h)?;
    let lo = f(x - h)?;
    Ok((hi - lo) / (2.0 * h))
}

/// Central difference of `f` at `x`: step h scales with the coordinate's
/// magnitude so large and tiny parameters probe equally.
pub fn finite_diff<F>(mut f: F, x: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    central(&mut f, x, FD_STEP_SCALE * x.abs().max(1.0))
}

/// Numerically differentiates the training loss with respect to the raw
/// parameters listed in `indices` (flat positions into `pv.data`).
pub fn finite_diff_grad(
    pv: &ParamVector,
    frames: &[Frame],
    cfg: &FitConfig,
    step: u64,
    indices: &[usize],
) -> Result<Vec<f64>> {
    let mut probe = pv.clone();
    let mut out = Vec::with_capacity(indices.len());
    for &idx in indices {
        let base = pv.data[idx];
        let h = FD_STEP_SCALE * base.abs().max(1.0);
        probe.data[idx] = base + h;
        let (hi, _) = forward_loss(&probe, frames, cfg, step)?;
        probe.data[idx] = base - h;
        let (lo, _) = forward_loss(&probe, frames, cfg, step)?;
        probe.data[idx] = base;
        out.push((hi - lo) / (2.0 * h));
    }
    Ok(out)
}

/// Per-Gaussian minimum of |hit radius − sigma_cutoff| over all pixels of
/// all frames.
///
/// The splat kernel is zeroed beyond the cutoff, so the loss has a kink
/// there; finite differences straddling it disagree with the analytic
/// gradient. Validation excludes Gaussians whose margin is below the probe
/// scale.
pub fn cutoff_margins(pv: &ParamVector, frames: &[Frame], cfg: &RenderConfig) -> Vec<f64> {
    let scene = decode_params(pv);
    let mut margins = vec![f64::INFINITY; scene.len()];
    for frame in frames {
        let local_t = frame.timestamp - scene.time_base;
        let snaps: Vec<_> = (0..scene.len())
            .map(|i| scene.gaussian(i).snapshot_at(local_t))
            .collect();
        for py in 0..frame.intrinsics.height {
            for px in 0..frame.intrinsics.width {
                let ray = frame.pose.ray_through_pixel(&frame.intrinsics, px, py);
                for (i, snap) in snaps.iter().enumerate() {
                    if let Some((u, v, _)) = intersect_surfel(snap, ray.origin, ray.dir) {
                        let d = ((u * u + v * v).sqrt() - cfg.sigma_cutoff).abs();
                        if d < margins[i] {
                            margins[i] = d;
                        }
                    }
                }
            }
        }
    }
    margins
}
